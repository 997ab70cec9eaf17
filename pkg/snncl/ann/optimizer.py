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

"""Adam with bias correction.

The L2 term is part of the loss (see `model.loss_and_grads`), so the gradients
handed to `adam_step` already include `l2 * W`. `l2` is stored on the state so
the trainer has a single place to read every optimizer hyperparameter from.
"""

from __future__ import annotations

import dataclasses

import chex
import jax
from jax import numpy as jnp
import numpy as np
from snncl import errors
from snncl import jax_utils
from snncl.ann import model as model_lib


@chex.dataclass(frozen=True)
class OptimizerState:
  """Adam hyperparameters and per-parameter moments."""

  # step size
  learning_rate: float = 1e-3
  # exponential decay of the first moment
  beta1: float = 0.9
  # exponential decay of the second moment
  beta2: float = 0.999
  # added to sqrt(v_hat) in the denominator
  eps: float = 1e-8
  # weight of l2 / 2 * sum ||W||^2 in the loss
  l2: float = 1e-4
  # first moments, shaped like the parameters
  m: model_lib.ModelParams = dataclasses.field(default_factory=dict)
  # second moments, shaped like the parameters
  v: model_lib.ModelParams = dataclasses.field(default_factory=dict)
  # number of updates applied so far
  step: int = 0


def init_optimizer(
    params: model_lib.ModelParams,
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    l2: float = 1e-4,
) -> OptimizerState:
  """Fresh state with zero moments and step 0."""
  if learning_rate <= 0:
    raise errors.ValidationError(
        f'learning_rate must be > 0, got {learning_rate}.'
    )
  if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
    raise errors.ValidationError(
        f'Betas must lie in [0, 1), got {beta1}, {beta2}.'
    )
  if l2 < 0:
    raise errors.ValidationError(f'l2 must be >= 0, got {l2}.')
  return OptimizerState(
      learning_rate=learning_rate,
      beta1=beta1,
      beta2=beta2,
      eps=eps,
      l2=l2,
      m=jax.tree_util.tree_map(jnp.zeros_like, params),
      v=jax.tree_util.tree_map(jnp.zeros_like, params),
      step=0,
  )


@jax_utils.jit
def _adam_update(
    state: OptimizerState,
    params: model_lib.ModelParams,
    grads: model_lib.ModelParams,
) -> tuple[model_lib.ModelParams, OptimizerState]:
  """One bias-corrected Adam update of every leaf."""
  step = state.step + 1
  t = jnp.asarray(step, dtype=jax_utils.float_dtype())
  m = jax.tree_util.tree_map(
      lambda m, g: state.beta1 * m + (1.0 - state.beta1) * g, state.m, grads
  )
  v = jax.tree_util.tree_map(
      lambda v, g: state.beta2 * v + (1.0 - state.beta2) * g * g,
      state.v,
      grads,
  )
  correction1 = 1.0 - state.beta1**t
  correction2 = 1.0 - state.beta2**t

  def update(p, m, v):
    m_hat = m / correction1
    v_hat = v / correction2
    return p - state.learning_rate * m_hat / (jnp.sqrt(v_hat) + state.eps)

  new_params = jax.tree_util.tree_map(update, params, m, v)
  return new_params, dataclasses.replace(state, m=m, v=v, step=step)


def first_non_finite(tree: model_lib.ModelParams) -> str | None:
  """Name `<layer>/<param>` of the first non-finite leaf, or None."""
  if bool(jax_utils.all_finite(tree)):
    return None
  for layer_name in sorted(tree):
    for param_name in sorted(tree[layer_name]):
      if not np.all(np.isfinite(np.asarray(tree[layer_name][param_name]))):
        return f'{layer_name}/{param_name}'
  return None


def adam_step(
    state: OptimizerState,
    params: model_lib.ModelParams,
    grads: model_lib.ModelParams,
    loss: float | None = None,
) -> tuple[model_lib.ModelParams, OptimizerState]:
  """Applies one Adam update.

  Args:
    state: Current optimizer state. Its moments must mirror `params`.
    params: Parameters to update.
    grads: Gradients of the full loss (L2 term included).
    loss: Loss of the batch that produced `grads`, only used for diagnostics.

  Returns:
    (updated params, updated state) with the step counter advanced by one.

  Raises:
    DimensionError: if grads or moments do not mirror the parameter shapes.
    TrainingDivergedError: if any gradient entry is non-finite.
  """
  shapes = jax.tree_util.tree_map(jnp.shape, params)
  for name, tree in (('grads', grads), ('m', state.m), ('v', state.v)):
    if jax.tree_util.tree_map(jnp.shape, tree) != shapes:
      raise errors.DimensionError(
          f'Optimizer {name} do not mirror the parameter shapes.'
      )
  bad = first_non_finite(grads)
  if bad is not None:
    step = int(state.step) + 1
    raise errors.TrainingDivergedError(
        f'Non-finite gradient for {bad} at optimizer step {step}.',
        diagnostics={'param': bad, 'step': step, 'loss': loss},
    )
  return _adam_update(state, params, grads)
