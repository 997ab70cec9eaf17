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

"""Dense tensor primitives shared by the trainer and the spiking simulator.

Tensors are plain `jax.Array`s: the shape is the metadata, the storage is
row-major. Every function here is a pure function of its inputs, safe to call
inside `jax.jit`, and performs all shape validation on static shapes so that
errors surface at trace time with both shapes in the message.

Spatial ops accept either a single example (C, H, W) or a batch
(B, C, H, W); the batch axis is only ever mapped over, never reduced.

The convolution is a cross-correlation (no kernel flip), the convention the
trainer uses, so converted weights keep their meaning in the simulator.
"""

import enum

import jax
from jax import numpy as jnp
from snncl import errors

# Matmuls run at full precision so f64 builds really are f64 end to end.
_PRECISION = jax.lax.Precision.HIGHEST


@enum.unique
class Padding(enum.Enum):
  VALID = 'valid'
  SAME = 'same'


def matmul(a: jax.Array, b: jax.Array) -> jax.Array:
  """Standard matrix product of a (m, k) and a (k, n) tensor.

  Args:
    a: Left operand, rank 2.
    b: Right operand, rank 2.

  Returns:
    The (m, n) product.

  Raises:
    DimensionError: if either operand is not rank 2 or the inner dimensions
      differ.
  """
  if a.ndim != 2 or b.ndim != 2:
    raise errors.DimensionError(
        f'matmul expects rank-2 operands, got shapes {a.shape} and {b.shape}.'
    )
  if a.shape[1] != b.shape[0]:
    raise errors.DimensionError(
        f'matmul inner dimensions differ: {a.shape} x {b.shape}.'
    )
  return jnp.matmul(a, b, precision=_PRECISION)


def _as_padding(padding: Padding | str) -> Padding:
  if isinstance(padding, Padding):
    return padding
  try:
    return Padding(padding.lower())
  except ValueError as e:
    raise errors.DimensionError(
        f'Unknown padding {padding!r}, expected "valid" or "same".'
    ) from e


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int]:
  """Returns (low, high) padding so that out = ceil(size / stride).

  The extra pixel of an odd total goes to the high side.
  """
  out = -(-size // stride)
  total = max((out - 1) * stride + kernel - size, 0)
  return total // 2, total - total // 2


def conv_output_size(
    size: int, kernel: int, stride: int, padding: Padding | str
) -> int:
  """H' = floor((H + pad_total - kh) / stride) + 1."""
  padding = _as_padding(padding)
  if padding == Padding.SAME:
    low, high = same_padding(size, kernel, stride)
  else:
    low, high = 0, 0
  padded = size + low + high
  if kernel > padded:
    raise errors.DimensionError(
        f'Kernel of size {kernel} does not fit in padded input of size'
        f' {padded}.'
    )
  return (padded - kernel) // stride + 1


def _pad_spatial(
    x: jax.Array, kh: int, kw: int, stride: int, padding: Padding
) -> jax.Array:
  if padding == Padding.VALID:
    return x
  pad_h = same_padding(x.shape[-2], kh, stride)
  pad_w = same_padding(x.shape[-1], kw, stride)
  pad_width = [(0, 0)] * (x.ndim - 2) + [pad_h, pad_w]
  return jnp.pad(x, pad_width)


def _batched(x: jax.Array, name: str) -> tuple[jax.Array, bool]:
  """Adds a leading batch axis to rank-3 inputs."""
  if x.ndim == 3:
    return x[None], True
  if x.ndim == 4:
    return x, False
  raise errors.DimensionError(
      f'{name} expects (C, H, W) or (B, C, H, W), got shape {x.shape}.'
  )


def im2col(
    x: jax.Array, kh: int, kw: int, stride: int, padding: Padding | str
) -> jax.Array:
  """Unfolds (B, C, H, W) into (B, C * kh * kw, H' * W') patch columns.

  Column rows are ordered (channel, kernel row, kernel col), matching
  `kernels.reshape(C_out, -1)`.
  """
  padding = _as_padding(padding)
  b, c, h, w = x.shape
  ho = conv_output_size(h, kh, stride, padding)
  wo = conv_output_size(w, kw, stride, padding)
  xp = _pad_spatial(x, kh, kw, stride, padding)
  taps = []
  for i in range(kh):
    for j in range(kw):
      taps.append(
          xp[
              :,
              :,
              i : i + stride * (ho - 1) + 1 : stride,
              j : j + stride * (wo - 1) + 1 : stride,
          ]
      )
  cols = jnp.stack(taps, axis=2)  # (B, C, kh*kw, ho, wo)
  return cols.reshape(b, c * kh * kw, ho * wo)


def col2im(
    cols: jax.Array,
    input_shape: tuple[int, ...],
    kh: int,
    kw: int,
    stride: int,
    padding: Padding | str,
) -> jax.Array:
  """Adjoint of `im2col`: scatter-adds patch columns back onto the input."""
  padding = _as_padding(padding)
  b, c, h, w = input_shape
  ho = conv_output_size(h, kh, stride, padding)
  wo = conv_output_size(w, kw, stride, padding)
  if padding == Padding.SAME:
    (top, bottom), (left, right) = (
        same_padding(h, kh, stride),
        same_padding(w, kw, stride),
    )
  else:
    top = bottom = left = right = 0
  cols = cols.reshape(b, c, kh, kw, ho, wo)
  xp = jnp.zeros((b, c, h + top + bottom, w + left + right), cols.dtype)
  for i in range(kh):
    for j in range(kw):
      xp = xp.at[
          :,
          :,
          i : i + stride * (ho - 1) + 1 : stride,
          j : j + stride * (wo - 1) + 1 : stride,
      ].add(cols[:, :, i, j])
  return xp[:, :, top : top + h, left : left + w]


def _check_conv_shapes(x: jax.Array, kernels: jax.Array) -> None:
  if kernels.ndim != 4:
    raise errors.DimensionError(
        f'conv2d kernels must be (C_out, C_in, kh, kw), got {kernels.shape}.'
    )
  if x.shape[1] != kernels.shape[1]:
    raise errors.DimensionError(
        f'conv2d channel mismatch: input {x.shape} vs kernels'
        f' {kernels.shape}.'
    )


def conv2d(
    x: jax.Array,
    kernels: jax.Array,
    stride: int = 1,
    padding: Padding | str = Padding.VALID,
) -> jax.Array:
  """2-D cross-correlation.

  Args:
    x: Input of shape (C_in, H, W) or (B, C_in, H, W).
    kernels: Kernels of shape (C_out, C_in, kh, kw).
    stride: Positive spatial stride.
    padding: "valid" (no padding) or "same" (output = ceil(H / stride)).

  Returns:
    Output of shape (C_out, H', W') or (B, C_out, H', W').

  Raises:
    DimensionError: on channel mismatch or a kernel larger than the padded
      input.
  """
  if stride < 1:
    raise errors.DimensionError(f'stride must be positive, got {stride}.')
  xb, squeeze = _batched(x, 'conv2d')
  _check_conv_shapes(xb, kernels)
  c_out, _, kh, kw = kernels.shape
  b, _, h, w = xb.shape
  ho = conv_output_size(h, kh, stride, padding)
  wo = conv_output_size(w, kw, stride, padding)
  cols = im2col(xb, kh, kw, stride, padding)
  out = jnp.matmul(
      kernels.reshape(c_out, -1), cols, precision=_PRECISION
  ).reshape(b, c_out, ho, wo)
  return out[0] if squeeze else out


def conv2d_backward(
    x: jax.Array,
    kernels: jax.Array,
    dy: jax.Array,
    stride: int = 1,
    padding: Padding | str = Padding.VALID,
) -> tuple[jax.Array, jax.Array]:
  """Gradients of `conv2d` with respect to its input and its kernels.

  Args:
    x: The forward input, (B, C_in, H, W).
    kernels: The forward kernels, (C_out, C_in, kh, kw).
    dy: Upstream gradient, (B, C_out, H', W').
    stride: Forward stride.
    padding: Forward padding.

  Returns:
    (dx, dkernels) with the shapes of x and kernels. dkernels is summed over
    the batch.
  """
  c_out, _, kh, kw = kernels.shape
  b = x.shape[0]
  cols = im2col(x, kh, kw, stride, padding)  # (B, CKK, P)
  dy_mat = dy.reshape(b, c_out, -1)  # (B, C_out, P)
  dk = jnp.einsum('bop,bkp->ok', dy_mat, cols, precision=_PRECISION)
  dcols = jnp.einsum(
      'ok,bop->bkp', kernels.reshape(c_out, -1), dy_mat, precision=_PRECISION
  )
  dx = col2im(dcols, x.shape, kh, kw, stride, padding)
  return dx, dk.reshape(kernels.shape)


def maxpool2d(x: jax.Array) -> tuple[jax.Array, jax.Array]:
  """2x2 max pooling with stride 2.

  Args:
    x: Input of shape (..., C, H, W) with H and W even.

  Returns:
    (pooled, argmax) where pooled has shape (..., C, H/2, W/2) and argmax
    holds the flat in-window index of the selected element (row = idx // 2,
    col = idx % 2). Ties go to the first element in row-major window order.

  Raises:
    DimensionError: if H or W is odd or the input has rank < 3.
  """
  if x.ndim < 3:
    raise errors.DimensionError(
        f'maxpool2d expects (..., C, H, W), got shape {x.shape}.'
    )
  h, w = x.shape[-2:]
  if h % 2 or w % 2:
    raise errors.DimensionError(
        f'maxpool2d needs even spatial dims, got {x.shape}; pad first.'
    )
  lead = x.shape[:-2]
  windows = x.reshape(lead + (h // 2, 2, w // 2, 2))
  windows = jnp.moveaxis(windows, -3, -2)  # (..., h/2, w/2, 2, 2)
  windows = windows.reshape(lead + (h // 2, w // 2, 4))
  return jnp.max(windows, axis=-1), jnp.argmax(windows, axis=-1)


def maxpool2d_backward(dy: jax.Array, argmax: jax.Array) -> jax.Array:
  """Routes the pooled gradient back to the selected window elements."""
  lead = dy.shape[:-2]
  ho, wo = dy.shape[-2:]
  routed = jax.nn.one_hot(argmax, 4, dtype=dy.dtype) * dy[..., None]
  routed = routed.reshape(lead + (ho, wo, 2, 2))
  routed = jnp.moveaxis(routed, -2, -3)  # (..., ho, 2, wo, 2)
  return routed.reshape(lead + (2 * ho, 2 * wo))


def relu(x: jax.Array) -> jax.Array:
  return jnp.maximum(x, 0)
