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

"""Unit tests for snncl.snn.neurons."""

from absl.testing import absltest
from absl.testing import parameterized
import jax
from jax import numpy as jnp
import numpy as np
from snncl.snn import neurons


def _count_spikes(u, s, dt, n_steps, max_spikes_per_step=1):
  """Total spikes and amplitude sum of a constant drive over n_steps."""

  def step(v, _):
    n, v = neurons.integrate_and_fire(v, u, s, dt, max_spikes_per_step)
    return v, n

  _, counts = jax.lax.scan(step, jnp.zeros_like(u), None, length=n_steps)
  return np.asarray(counts.sum(axis=0))


class NeuronsTest(parameterized.TestCase):
  """Unit tests for the `snncl.snn.neurons` module."""

  @parameterized.product(
      s=(1.0, 10.0, 100.0),
      dt=(0.001, 0.01),
  )
  def test_spike_count_tracks_rate(self, s, dt):
    u = jnp.linspace(0.0, 1.0 / (s * dt), 17)
    n_steps = 200
    counts = _count_spikes(u, s, dt, n_steps)
    expected = np.floor(np.asarray(u) * s * n_steps * dt)
    self.assertTrue(np.all(np.abs(counts - expected) <= 1), (counts, expected))

  def test_negative_drive_never_fires(self):
    counts = _count_spikes(jnp.array([-5.0, -1e-3, 0.0]), 1.0, 0.001, 500)
    np.testing.assert_array_equal(counts, [0, 0, 0])

  def test_single_spike_per_step_saturates(self):
    # A drive worth 3.5 spikes per step still fires once per step.
    counts = _count_spikes(jnp.array([3500.0]), 1.0, 0.001, 40)
    np.testing.assert_array_equal(counts, [40])

  def test_multiple_spikes_per_step(self):
    counts = _count_spikes(
        jnp.array([3500.0]), 1.0, 0.001, 40, max_spikes_per_step=4
    )
    self.assertAlmostEqual(float(counts[0]), 3.5 * 40, delta=1.0)

  def test_amplitude_is_inverse_scale(self):
    amplitude, v = neurons.neuron_step(
        jnp.array([0.95, 0.0]), jnp.array([50.0, 50.0]), 2.0, 0.001
    )
    np.testing.assert_allclose(amplitude, [500.0, 0.0])
    np.testing.assert_allclose(v, [0.05, 0.1], atol=1e-12)

  def test_rate_response(self):
    np.testing.assert_array_equal(
        neurons.rate_response(jnp.array([-1.0, 0.0, 2.5])), [0.0, 0.0, 2.5]
    )

  @parameterized.parameters(0.005, 0.02, 0.1)
  def test_lowpass_step_response(self, tau):
    dt = 0.001

    def step(y, _):
      y = neurons.lowpass_step(y, jnp.ones(()), tau, dt)
      return y, y

    _, ys = jax.lax.scan(step, jnp.zeros(()), None, length=300)
    t = dt * np.arange(1, 301)
    np.testing.assert_allclose(ys, 1.0 - np.exp(-t / tau), atol=1e-9)

  def test_zero_tau_is_passthrough(self):
    x = jnp.array([0.3, -2.0, 7.0])
    y = neurons.lowpass_step(jnp.full(3, 100.0), x, 0.0, 0.001)
    np.testing.assert_array_equal(y, x)
    self.assertEqual(float(neurons.lowpass_coefficient(0.0, 0.001)), 0.0)

  def test_lowpass_coefficient(self):
    np.testing.assert_allclose(
        neurons.lowpass_coefficient(0.005, 0.001), np.exp(-0.2), rtol=1e-14
    )

  @parameterized.parameters((1.0, 1.0), (10.0, 0.1), (100.0, 0.01))
  def test_reaching_threshold_exactly_fires_once(self, s, u):
    dt = 0.001
    amplitude, v = neurons.neuron_step(
        jnp.array([0.999]), jnp.array([u]), s, dt
    )
    np.testing.assert_allclose(amplitude, [1.0 / (s * dt)], rtol=1e-12)
    np.testing.assert_array_equal(v, [0.0])

  @parameterized.parameters((1.0, 100.0), (10.0, 10.0), (100.0, 1.0))
  def test_one_second_at_hundred_hertz(self, s, u):
    counts = _count_spikes(jnp.array([u]), s, 0.001, 1000)
    self.assertIn(int(counts[0]), (99, 100, 101))

  def test_lowpass_first_step_when_tau_equals_dt(self):
    x = jnp.array([1.0, -3.0, 0.25])
    y = neurons.lowpass_step(jnp.zeros(3), x, 0.001, 0.001)
    np.testing.assert_allclose(
        y, (1.0 - np.exp(-1.0)) * np.asarray(x), rtol=1e-14
    )


if __name__ == '__main__':
  absltest.main()
