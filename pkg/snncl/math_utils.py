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

"""Math operations.

Probability-level helpers that are needed by both the trainer and the
simulator readout, but are not specific to either.
"""

import jax
from jax import numpy as jnp


def softmax(logits: jax.Array) -> jax.Array:
  """Softmax over the last axis, computed with max-subtraction.

  Subtracting the row maximum makes every finite input valid: the largest
  exponent is exp(0) = 1, so nothing overflows and the denominator is >= 1.

  Args:
    logits: Array of shape (..., n) with n >= 1.

  Returns:
    Probabilities of the same shape; each row is positive and sums to 1.
  """
  shifted = logits - jnp.max(logits, axis=-1, keepdims=True)
  e = jnp.exp(shifted)
  return e / jnp.sum(e, axis=-1, keepdims=True)


def log_softmax(logits: jax.Array) -> jax.Array:
  shifted = logits - jnp.max(logits, axis=-1, keepdims=True)
  return shifted - jnp.log(jnp.sum(jnp.exp(shifted), axis=-1, keepdims=True))


def cross_entropy(logits: jax.Array, labels: jax.Array) -> jax.Array:
  """Mean cross-entropy of integer `labels` under `logits` (B, n)."""
  logp = log_softmax(logits)
  picked = jnp.take_along_axis(logp, labels[:, None], axis=-1)[:, 0]
  return -jnp.mean(picked)


def cross_entropy_grad(logits: jax.Array, labels: jax.Array) -> jax.Array:
  """d(mean cross-entropy) / d(logits) = (softmax - onehot) / B."""
  b, n = logits.shape
  onehot = jax.nn.one_hot(labels, n, dtype=logits.dtype)
  return (softmax(logits) - onehot) / b


def predict_class(probabilities: jax.Array) -> jax.Array:
  """Argmax over the last axis; ties go to the lowest class id."""
  return jnp.argmax(probabilities, axis=-1)


def true_class_rank(probabilities: jax.Array, labels: jax.Array) -> jax.Array:
  """1-based rank of the true class in the descending probability order.

  A class ranks above the true class if it has a strictly larger probability,
  or an equal probability and a lower class id (lowest-id tie-break).

  Args:
    probabilities: (N, n) probabilities.
    labels: (N,) integer true classes.

  Returns:
    (N,) integer ranks in 1..n.
  """
  n = probabilities.shape[-1]
  p_true = jnp.take_along_axis(probabilities, labels[:, None], axis=-1)
  ids = jnp.arange(n)[None, :]
  above = (probabilities > p_true) | (
      (probabilities == p_true) & (ids < labels[:, None])
  )
  return 1 + jnp.sum(above, axis=-1)
