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

"""Rectified-linear neurons and exponential synapses.

The spiking neuron integrates its scaled, rectified drive and fires whenever
the membrane potential reaches 1:

  v <- v + max(s * u, 0) * dt
  n <- min(floor(v), max_spikes_per_step)     (n = [v >= 1] by default)
  v <- v - n                                  (subtractive reset)

and emits an amplitude of n / (s * dt). Over T steps the amplitude-weighted
rate is within 1 / (s * T * dt) of max(u, 0), whatever the scale s.

The rate neuron returns max(u, 0) directly: multiplying the drive by s and the
output by 1 / s would cancel exactly in real arithmetic, and skipping both keeps
the output bit-identical to the source network's ReLU.
"""

import enum

import jax
from jax import numpy as jnp
from snncl import jax_utils
from snncl import tensor_ops


@enum.unique
class NeuronMode(enum.Enum):
  """Neuron model substituted for every ReLU."""

  RATE = 'rate'
  SPIKING = 'spiking'


def integrate_and_fire(
    v: jax.Array,
    u: jax.Array,
    s: float | jax.Array,
    dt: float | jax.Array,
    max_spikes_per_step: int = 1,
) -> tuple[jax.Array, jax.Array]:
  """Advances membrane potentials one step.

  Args:
    v: Membrane potentials, >= 0.
    u: Drive, same shape as `v`.
    s: Firing-rate scale, > 0.
    dt: Timestep in seconds.
    max_spikes_per_step: Most spikes a neuron may emit in one step.

  Returns:
    (spike counts, updated potentials). Counts are integers stored in the
    float dtype of `v`.
  """
  v = v + jnp.maximum(s * u, 0.0) * dt
  if max_spikes_per_step == 1:
    n = jnp.where(v >= 1.0, 1.0, 0.0).astype(v.dtype)
  else:
    n = jnp.clip(jnp.floor(v), 0.0, max_spikes_per_step)
  v = v - n
  v = jax_utils.error_if_negative(v, 'membrane potential')
  return n, v


def neuron_step(
    v: jax.Array,
    u: jax.Array,
    s: float | jax.Array,
    dt: float | jax.Array,
    max_spikes_per_step: int = 1,
) -> tuple[jax.Array, jax.Array]:
  """One spiking rectified-linear step.

  Returns:
    (spike amplitudes, updated potentials). Amplitudes are multiples of
    1 / (s * dt), with 0 meaning no spike.
  """
  n, v = integrate_and_fire(v, u, s, dt, max_spikes_per_step)
  return n / (s * dt), v


def rate_response(u: jax.Array) -> jax.Array:
  """Steady-state output of the rate neuron, max(u, 0)."""
  return tensor_ops.relu(u)


def lowpass_coefficient(
    tau: float | jax.Array, dt: float | jax.Array
) -> jax.Array:
  """exp(-dt / tau), or 0 for tau = 0."""
  tau = jnp.asarray(tau, dtype=jax_utils.float_dtype())
  safe_tau = jnp.where(tau > 0.0, tau, 1.0)
  return jnp.where(tau > 0.0, jnp.exp(-dt / safe_tau), 0.0)


def lowpass_step(
    y: jax.Array,
    x: jax.Array,
    tau: float | jax.Array,
    dt: float | jax.Array,
) -> jax.Array:
  """Exponential-Euler update of a first-order lowpass synapse.

  y <- a * y + (1 - a) * x with a = exp(-dt / tau). tau = 0 is a passthrough
  and returns `x` unchanged.
  """
  a = lowpass_coefficient(tau, dt)
  return jnp.where(jnp.asarray(tau) > 0.0, a * y + (1.0 - a) * x, x)
