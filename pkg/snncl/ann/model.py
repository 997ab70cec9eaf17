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

"""The convolutional classifier: declarative spec, parameters, and passes.

The head is a fixed 10-unit dense layer from the very first increment. Loss is
always computed over all 10 logits with global class ids, so the logits of
classes trained earlier persist and can be evaluated later.
"""

from __future__ import annotations

from collections.abc import Sequence
import dataclasses
import functools

import immutabledict
import jax
from jax import numpy as jnp
import numpy as np
from snncl import errors
from snncl import jax_utils
from snncl import math_utils
from snncl.ann import layers as layers_lib

NUM_CLASSES = 10
INPUT_SHAPE = (1, 28, 28)

ModelParams = dict[str, layers_lib.Params]


@dataclasses.dataclass(frozen=True)
class ModelSpec:
  """Declarative layer stack.

  Attributes:
    layers: Layers in order. Consecutive shapes must compose and the last
      layer must produce `num_classes` values.
    input_shape: (C, H, W) of one example.
    num_classes: Width of the output head.
  """

  layers: tuple[layers_lib.Layer, ...]
  input_shape: tuple[int, ...] = INPUT_SHAPE
  num_classes: int = NUM_CLASSES

  def __post_init__(self):
    # Accept lists from config code but store a hashable tuple.
    object.__setattr__(self, 'layers', tuple(self.layers))
    object.__setattr__(self, 'input_shape', tuple(self.input_shape))
    output = self.shapes()[-1]
    if output != (self.num_classes,):
      raise errors.DimensionError(
          f'Model output shape is {output}, expected ({self.num_classes},).'
      )

  def shapes(self) -> list[tuple[int, ...]]:
    """Per-layer input shapes followed by the output shape."""
    shapes = [self.input_shape]
    for layer in self.layers:
      try:
        shapes.append(layer.output_shape(shapes[-1]))
      except errors.DimensionError as e:
        raise errors.DimensionError(
            f'Layer {len(shapes) - 1} ({layer.tag}): {e}'
        ) from e
    return shapes

  def layer_names(self) -> list[str]:
    return [f'{layer.tag}_{i}' for i, layer in enumerate(self.layers)]

  def to_config(self) -> dict[str, object]:
    return {
        'layers': [layer.to_config() for layer in self.layers],
        'input_shape': list(self.input_shape),
        'num_classes': self.num_classes,
    }

  @classmethod
  def from_config(cls, config: dict[str, object]) -> ModelSpec:
    return cls(
        layers=tuple(
            layers_lib.layer_from_config(c) for c in config['layers']
        ),
        input_shape=tuple(config['input_shape']),
        num_classes=int(config['num_classes']),
    )


def reference_spec() -> ModelSpec:
  """Conv(32, s1), Conv(64, s2), Conv(128, s2), Dense(10); ReLU after convs."""
  return ModelSpec(
      layers=(
          layers_lib.Conv2D(32, kernel=3, stride=1),
          layers_lib.ReLU(),
          layers_lib.Conv2D(64, kernel=3, stride=2),
          layers_lib.ReLU(),
          layers_lib.Conv2D(128, kernel=3, stride=2),
          layers_lib.ReLU(),
          layers_lib.Flatten(),
          layers_lib.Dense(NUM_CLASSES),
      )
  )


def small_spec() -> ModelSpec:
  """Two strided convolutions; trains in seconds, for smoke runs and tests."""
  return ModelSpec(
      layers=(
          layers_lib.Conv2D(8, kernel=3, stride=2),
          layers_lib.ReLU(),
          layers_lib.Conv2D(16, kernel=3, stride=2),
          layers_lib.ReLU(),
          layers_lib.Flatten(),
          layers_lib.Dense(NUM_CLASSES),
      )
  )


def pooled_spec() -> ModelSpec:
  """Same-padded convolution, max pooling and a hidden dense layer."""
  return ModelSpec(
      layers=(
          layers_lib.Conv2D(16, kernel=3, stride=1, padding='same'),
          layers_lib.ReLU(),
          layers_lib.MaxPool2D(),
          layers_lib.Flatten(),
          layers_lib.Dense(64),
          layers_lib.ReLU(),
          layers_lib.Dense(NUM_CLASSES),
      )
  )


# Named architectures selectable from the experiment config.
ARCHITECTURES = immutabledict.immutabledict({
    'reference': reference_spec,
    'small': small_spec,
    'pooled': pooled_spec,
})


def architecture_spec(name: str) -> ModelSpec:
  if name not in ARCHITECTURES:
    raise errors.ConfigError(
        f'Unknown architecture {name!r}; known: {sorted(ARCHITECTURES)}.'
    )
  return ARCHITECTURES[name]()


@dataclasses.dataclass(frozen=True, eq=False)
class TrainedModel:
  """A ModelSpec with its learned parameters.

  Attributes:
    spec: The layer stack.
    params: Maps layer name (see `ModelSpec.layer_names`) to the layer's
      parameter dict; layers without parameters are absent.
    training_log: Mean loss of every epoch trained so far, in order.
    seed: Seed the parameters were initialized with.
  """

  spec: ModelSpec
  params: ModelParams
  training_log: tuple[float, ...] = ()
  seed: int = 0

  def __post_init__(self):
    expected = init_param_shapes(self.spec)
    actual = {
        name: {k: tuple(v.shape) for k, v in p.items()}
        for name, p in self.params.items()
    }
    if actual != expected:
      raise errors.DimensionError(
          f'Parameter shapes {actual} do not match the model spec {expected}.'
      )


def init_param_shapes(spec: ModelSpec) -> dict[str, dict[str, tuple]]:
  """Parameter shapes implied by a ModelSpec, without allocating them."""
  shapes = jax.eval_shape(
      lambda key: _init_params(spec, key), jax.random.PRNGKey(0)
  )
  return {
      name: {k: tuple(v.shape) for k, v in p.items()}
      for name, p in shapes.items()
  }


def _init_params(spec: ModelSpec, key: jax.Array) -> ModelParams:
  params = {}
  in_shapes = spec.shapes()
  keys = jax.random.split(key, len(spec.layers))
  for name, layer, k, shape in zip(
      spec.layer_names(), spec.layers, keys, in_shapes
  ):
    if layer.has_params:
      params[name] = layer.init_params(k, shape)
  return params


def init_model(spec: ModelSpec, seed: int) -> TrainedModel:
  """He fan-in scaled normal weights, zero biases."""
  params = _init_params(spec, jax.random.PRNGKey(seed))
  return TrainedModel(spec=spec, params=params, seed=seed)


def zero_model(spec: ModelSpec) -> TrainedModel:
  """All-zero parameters; its softmax output is uniform for every input."""
  params = jax.tree_util.tree_map(
      jnp.zeros_like, _init_params(spec, jax.random.PRNGKey(0))
  )
  return TrainedModel(spec=spec, params=params)


def check_batch(spec: ModelSpec, batch: jax.Array | np.ndarray) -> None:
  if tuple(batch.shape[1:]) != spec.input_shape:
    raise errors.DimensionError(
        f'Batch shape {tuple(batch.shape)} does not match model input'
        f' (B,) + {spec.input_shape}.'
    )


def check_labels(spec: ModelSpec, labels: jax.Array | np.ndarray) -> None:
  labels = np.asarray(labels)
  if labels.size and (labels.min() < 0 or labels.max() >= spec.num_classes):
    raise errors.ValidationError(
        f'Labels must lie in 0..{spec.num_classes - 1}, got range'
        f' [{labels.min()}, {labels.max()}].'
    )


def forward_with_cache(
    spec: ModelSpec, params: ModelParams, x: jax.Array
) -> tuple[jax.Array, list]:
  """Runs the stack, keeping every layer's cache for `backward`."""
  caches = []
  for name, layer in zip(spec.layer_names(), spec.layers):
    x, cache = layer.forward(params.get(name, {}), x)
    caches.append(cache)
  return x, caches


def apply_layers(
    spec: ModelSpec,
    params: ModelParams,
    x: jax.Array,
    start: int = 0,
    stop: int | None = None,
) -> jax.Array:
  """Applies layers[start:stop] without keeping caches."""
  names = spec.layer_names()
  stop = len(spec.layers) if stop is None else stop
  for i in range(start, stop):
    x = spec.layers[i].apply(params.get(names[i], {}), x)
  return x


@functools.partial(jax_utils.jit, static_argnums=0)
def _forward(spec: ModelSpec, params: ModelParams, x: jax.Array) -> jax.Array:
  return apply_layers(spec, params, x)


def l2_penalty(spec: ModelSpec, params: ModelParams) -> jax.Array:
  """Sum of squared weights (biases excluded)."""
  total = jnp.zeros((), dtype=jax_utils.float_dtype())
  for name in params:
    total = total + jnp.sum(jnp.square(params[name]['w']))
  return total


@functools.partial(jax_utils.jit, static_argnums=0)
def loss_and_grads(
    spec: ModelSpec,
    params: ModelParams,
    x: jax.Array,
    labels: jax.Array,
    l2: float | jax.Array,
) -> tuple[jax.Array, ModelParams]:
  """Mean cross-entropy + l2 / 2 * sum ||W||^2, and its manual gradients."""
  logits, caches = forward_with_cache(spec, params, x)
  loss = math_utils.cross_entropy(logits, labels)
  loss = loss + 0.5 * l2 * l2_penalty(spec, params)
  dy = math_utils.cross_entropy_grad(logits, labels)
  grads = {}
  for name, layer, cache in reversed(
      list(zip(spec.layer_names(), spec.layers, caches))
  ):
    layer_params = params.get(name, {})
    dy, layer_grads = layer.backward(layer_params, cache, dy)
    if layer.has_params:
      layer_grads = dict(layer_grads)
      layer_grads['w'] = layer_grads['w'] + l2 * layer_params['w']
      grads[name] = layer_grads
  return loss, grads


def forward(model: TrainedModel, batch: jax.Array | np.ndarray) -> jax.Array:
  """Logits (B, 10) of a (B, 1, 28, 28) batch.

  Raises:
    DimensionError: if the batch does not match the model's input shape.
  """
  check_batch(model.spec, batch)
  return _forward(model.spec, model.params, jnp.asarray(batch))


def backward(
    model: TrainedModel,
    batch: jax.Array | np.ndarray,
    labels: Sequence[int] | np.ndarray | jax.Array,
    l2: float = 0.0,
) -> tuple[jax.Array, ModelParams]:
  """Loss and per-parameter gradients of a labeled batch.

  Args:
    model: The model to differentiate.
    batch: (B, 1, 28, 28) inputs.
    labels: (B,) class ids, each below the head width.
    l2: Weight of the l2/2 * sum ||W||^2 term.

  Returns:
    (loss, grads) with grads shaped like `model.params`.

  Raises:
    ValidationError: if a label is outside the head.
  """
  check_batch(model.spec, batch)
  check_labels(model.spec, labels)
  return loss_and_grads(
      model.spec,
      model.params,
      jnp.asarray(batch),
      jnp.asarray(labels, dtype=jnp.int32),
      l2,
  )


def predict_probabilities(
    model: TrainedModel,
    images: np.ndarray,
    chunk_size: int = 500,
) -> np.ndarray:
  """Softmax probabilities (N, 10) for (N, 28, 28) or (N, 1, 28, 28) images."""
  if images.ndim == 3:
    images = images[:, None]
  outputs = []
  for start in range(0, images.shape[0], chunk_size):
    logits = forward(model, images[start : start + chunk_size])
    outputs.append(np.asarray(math_utils.softmax(logits)))
  if not outputs:
    return np.zeros((0, model.spec.num_classes))
  return np.concatenate(outputs)
