# Copyright 2024 The snncl Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Layer kinds of the convolutional classifier.

Every layer is an immutable, hashable description (so a stack of them can be a
static argument to `jax.jit`) with three pure functions:

  - `forward(params, x)` returns the batched output and the cache the
    backward pass needs,
  - `backward(params, cache, dy)` returns the input gradient and the gradient
    of every parameter of the layer,
  - `init_params(key, input_shape)` returns freshly initialized parameters.

Shapes exclude the batch axis unless stated otherwise.
"""

from __future__ import annotations

import abc
import dataclasses
import math
from typing import Any, ClassVar

import immutabledict
import jax
from jax import numpy as jnp
from snncl import errors
from snncl import jax_utils
from snncl import tensor_ops

Params = dict[str, jax.Array]
Shape = tuple[int, ...]


class Layer(abc.ABC):
  """Base class of all layer kinds.

  Subclasses are frozen dataclasses and must set the class attribute `tag`,
  which names the kind in checkpoints and in error messages.
  """

  tag: ClassVar[str]

  @property
  def has_params(self) -> bool:
    return False

  @abc.abstractmethod
  def output_shape(self, input_shape: Shape) -> Shape:
    """Static output shape for a given input shape; raises DimensionError."""

  def init_params(self, key: jax.Array, input_shape: Shape) -> Params:
    del key, input_shape
    return {}

  @abc.abstractmethod
  def forward(self, params: Params, x: jax.Array) -> tuple[jax.Array, Any]:
    """Batched forward pass; returns (output, cache)."""

  @abc.abstractmethod
  def backward(
      self, params: Params, cache: Any, dy: jax.Array
  ) -> tuple[jax.Array, Params]:
    """Returns (dx, param grads) given the upstream gradient `dy`."""

  def apply(self, params: Params, x: jax.Array) -> jax.Array:
    """Forward pass without the cache."""
    return self.forward(params, x)[0]

  def to_config(self) -> dict[str, Any]:
    config = {'tag': self.tag}
    config.update(dataclasses.asdict(self))
    return config


def _he_normal(key: jax.Array, shape: Shape, fan_in: int) -> jax.Array:
  std = math.sqrt(2.0 / fan_in)
  return std * jax.random.normal(key, shape, dtype=jax_utils.float_dtype())


@dataclasses.dataclass(frozen=True)
class Conv2D(Layer):
  """2-D convolution (cross-correlation) with a per-channel bias."""

  tag: ClassVar[str] = 'conv2d'

  out_channels: int
  kernel: int = 3
  stride: int = 1
  padding: str = 'valid'

  @property
  def has_params(self) -> bool:
    return True

  def output_shape(self, input_shape: Shape) -> Shape:
    if len(input_shape) != 3:
      raise errors.DimensionError(
          f'{self.tag} expects (C, H, W) input, got {input_shape}.'
      )
    _, h, w = input_shape
    return (
        self.out_channels,
        tensor_ops.conv_output_size(h, self.kernel, self.stride, self.padding),
        tensor_ops.conv_output_size(w, self.kernel, self.stride, self.padding),
    )

  def init_params(self, key: jax.Array, input_shape: Shape) -> Params:
    c_in = input_shape[0]
    shape = (self.out_channels, c_in, self.kernel, self.kernel)
    return {
        'w': _he_normal(key, shape, c_in * self.kernel * self.kernel),
        'b': jnp.zeros((self.out_channels,), dtype=jax_utils.float_dtype()),
    }

  def forward(self, params: Params, x: jax.Array) -> tuple[jax.Array, Any]:
    y = tensor_ops.conv2d(x, params['w'], self.stride, self.padding)
    return y + params['b'][None, :, None, None], x

  def backward(
      self, params: Params, cache: Any, dy: jax.Array
  ) -> tuple[jax.Array, Params]:
    dx, dw = tensor_ops.conv2d_backward(
        cache, params['w'], dy, self.stride, self.padding
    )
    return dx, {'w': dw, 'b': jnp.sum(dy, axis=(0, 2, 3))}


@dataclasses.dataclass(frozen=True)
class MaxPool2D(Layer):
  """2x2 max pooling with stride 2."""

  tag: ClassVar[str] = 'maxpool2d'

  def output_shape(self, input_shape: Shape) -> Shape:
    if len(input_shape) != 3:
      raise errors.DimensionError(
          f'{self.tag} expects (C, H, W) input, got {input_shape}.'
      )
    c, h, w = input_shape
    if h % 2 or w % 2:
      raise errors.DimensionError(
          f'{self.tag} needs even spatial dims, got {input_shape}.'
      )
    return (c, h // 2, w // 2)

  def forward(self, params: Params, x: jax.Array) -> tuple[jax.Array, Any]:
    return tensor_ops.maxpool2d(x)

  def backward(
      self, params: Params, cache: Any, dy: jax.Array
  ) -> tuple[jax.Array, Params]:
    return tensor_ops.maxpool2d_backward(dy, cache), {}


@dataclasses.dataclass(frozen=True)
class Dense(Layer):
  """Fully connected layer, y = x @ w + b with w of shape (in, out)."""

  tag: ClassVar[str] = 'dense'

  out_units: int

  @property
  def has_params(self) -> bool:
    return True

  def output_shape(self, input_shape: Shape) -> Shape:
    if len(input_shape) != 1:
      raise errors.DimensionError(
          f'{self.tag} expects flat input, got {input_shape}; add a Flatten.'
      )
    return (self.out_units,)

  def init_params(self, key: jax.Array, input_shape: Shape) -> Params:
    fan_in = input_shape[0]
    return {
        'w': _he_normal(key, (fan_in, self.out_units), fan_in),
        'b': jnp.zeros((self.out_units,), dtype=jax_utils.float_dtype()),
    }

  def forward(self, params: Params, x: jax.Array) -> tuple[jax.Array, Any]:
    return tensor_ops.matmul(x, params['w']) + params['b'], x

  def backward(
      self, params: Params, cache: Any, dy: jax.Array
  ) -> tuple[jax.Array, Params]:
    dx = tensor_ops.matmul(dy, params['w'].T)
    dw = tensor_ops.matmul(cache.T, dy)
    return dx, {'w': dw, 'b': jnp.sum(dy, axis=0)}


@dataclasses.dataclass(frozen=True)
class ReLU(Layer):
  """Rectified linear activation. Conversion turns these into neurons."""

  tag: ClassVar[str] = 'relu'

  def output_shape(self, input_shape: Shape) -> Shape:
    return input_shape

  def forward(self, params: Params, x: jax.Array) -> tuple[jax.Array, Any]:
    return tensor_ops.relu(x), x

  def backward(
      self, params: Params, cache: Any, dy: jax.Array
  ) -> tuple[jax.Array, Params]:
    return jnp.where(cache > 0, dy, jnp.zeros_like(dy)), {}


@dataclasses.dataclass(frozen=True)
class Flatten(Layer):
  """Flattens (C, H, W) to (C * H * W,) in row-major order."""

  tag: ClassVar[str] = 'flatten'

  def output_shape(self, input_shape: Shape) -> Shape:
    return (math.prod(input_shape),)

  def forward(self, params: Params, x: jax.Array) -> tuple[jax.Array, Any]:
    return x.reshape(x.shape[0], -1), x.shape

  def backward(
      self, params: Params, cache: Any, dy: jax.Array
  ) -> tuple[jax.Array, Params]:
    return dy.reshape(cache), {}


LAYER_TYPES = immutabledict.immutabledict({
    cls.tag: cls for cls in (Conv2D, MaxPool2D, Dense, ReLU, Flatten)
})


def layer_from_config(config: dict[str, Any]) -> Layer:
  """Inverse of `Layer.to_config`."""
  config = dict(config)
  tag = config.pop('tag', None)
  if tag not in LAYER_TYPES:
    raise errors.ValidationError(
        f'Unknown layer tag {tag!r}; known: {sorted(LAYER_TYPES)}.'
    )
  return LAYER_TYPES[tag](**config)
