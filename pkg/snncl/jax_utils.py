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

"""JAX switches shared by the trainer and the simulator.

Two environment variables are read once, at import:

  SNNCL_ERRORS_ENABLED       in-graph invariant checks (default off)
  SNNCL_COMPILATION_ENABLED  jax.jit of hot paths (default on)
"""

import contextlib
import os
from typing import Any, Callable

import equinox as eqx
import jax
from jax import numpy as jnp

_TRUE_STRINGS = ('1', 'True', 'true')
_FALSE_STRINGS = ('0', 'False', 'false')


def env_bool(name: str, default: bool) -> bool:
  """Reads a boolean environment variable, `default` when unset.

  Raises:
    ValueError: for a value that is neither a true nor a false string.
  """
  value = os.environ.get(name)
  if value is None:
    return default
  if value in _TRUE_STRINGS:
    return True
  if value in _FALSE_STRINGS:
    return False
  raise ValueError(f'{name}={value!r} is not a boolean.')


_errors_enabled = env_bool('SNNCL_ERRORS_ENABLED', False)
_compilation_enabled = env_bool('SNNCL_COMPILATION_ENABLED', True)


@contextlib.contextmanager
def enable_errors(value: bool):
  """Turns `error_if` checks on or off inside a block.

  Example:

  with jax_utils.enable_errors(True):
    simulator.simulate(net, image, cfg)  # a negative membrane now raises

  Args:
    value: Whether checks run inside the block.

  Yields:
    Nothing; the previous setting is restored on exit.
  """
  global _errors_enabled
  saved = _errors_enabled
  _errors_enabled = value
  try:
    yield
  finally:
    _errors_enabled = saved


def errors_enabled() -> bool:
  return _errors_enabled


def error_if(
    var: jax.Array | float,
    cond: jax.Array | bool,
    msg: str,
) -> jax.Array:
  """`equinox.error_if` when checks are enabled, identity otherwise.

  The returned array must be used downstream, or the check is dropped from
  the traced graph.
  """
  var = jnp.asarray(var)
  if not _errors_enabled:
    return var
  return eqx.error_if(var, jnp.asarray(cond), msg)


def error_if_negative(var: jax.Array | float, name: str) -> jax.Array:
  """Fails if any entry of `var` is below zero. Returns `var`."""
  var = jnp.asarray(var)
  return error_if(var, jnp.min(var) < 0, f'{name} must be >= 0.')


def all_finite(tree: Any) -> jax.Array:
  """Scalar bool: every leaf of `tree` is free of NaN and Inf."""
  leaves = jax.tree_util.tree_leaves(tree)
  if not leaves:
    return jnp.array(True)
  return jnp.all(jnp.stack([jnp.all(jnp.isfinite(x)) for x in leaves]))


def jit(*args, **kwargs) -> Callable[..., Any]:
  """`jax.jit`, or the undecorated function if compilation is disabled."""
  if _compilation_enabled:
    return jax.jit(*args, **kwargs)
  return args[0]


def float_dtype() -> jnp.dtype:
  """Float dtype of the current SNNCL_PRECISION."""
  if jax.config.read('jax_enable_x64'):
    return jnp.float64
  return jnp.float32
