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

"""Discrete-time simulation of spiking networks.

An image is presented as constant drive for `n_steps` steps. Layers before the
first neuron layer see only that constant input, so their output is computed
once. Every step then propagates layer by layer: a neuron layer integrates its
drive and emits spikes (or rates), its synapse lowpass-filters them, and the
following layers act on the filtered activity. The logits pass through one
more synapse. The readout is the softmax of the mean logits over the trailing
`readout_window` steps.

The per-step loop is a `jax.lax.scan` and processes a batch of independent
presentations at once.
"""

from __future__ import annotations

import dataclasses
import functools
import os
import time

from absl import logging
import jax
from jax import numpy as jnp
import numpy as np
import pandas as pd
from snncl import errors
from snncl import jax_utils
from snncl import math_utils
from snncl.ann import layers as layers_lib
from snncl.ann import model as model_lib
from snncl.ann import trainer
from snncl.config import runtime_params
from snncl.data import dataset as dataset_lib
from snncl.snn import convert as convert_lib
from snncl.snn import neurons

SimConfig = runtime_params.SimConfig

TRACE_COLUMNS = ('step', 'neuron', 'amplitude')


@dataclasses.dataclass(frozen=True, eq=False)
class SpikeTrace:
  """Activity of one neuron layer during one presentation.

  Attributes:
    layer: Index into the network's `spec.layers` of the recorded layer.
    amplitudes: (n_steps, n_neurons) emitted amplitudes, neurons in row-major
      order of the layer's (C, H, W) output. In spiking mode every entry is a
      multiple of 1 / (s * dt); in rate mode it is the rate output.
    dt: Timestep in seconds.
    neuron_shape: Shape of the layer's output.
  """

  layer: int
  amplitudes: np.ndarray
  dt: float
  neuron_shape: tuple[int, ...] = ()

  @property
  def n_steps(self) -> int:
    return int(self.amplitudes.shape[0])

  @property
  def n_neurons(self) -> int:
    return int(self.amplitudes.shape[1])

  @property
  def rates(self) -> np.ndarray:
    """Per-neuron sum(amplitude * dt) / (n_steps * dt)."""
    total_time = self.n_steps * self.dt
    return np.sum(self.amplitudes, axis=0) * self.dt / total_time

  def events(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(steps, neurons, amplitudes) of the nonzero entries, step-major."""
    steps, neuron_ids = np.nonzero(self.amplitudes)
    return steps, neuron_ids, self.amplitudes[steps, neuron_ids]

  def __len__(self) -> int:
    return int(np.count_nonzero(self.amplitudes))


@dataclasses.dataclass(frozen=True, eq=False)
class SimResult:
  """Outcome of presenting one image.

  Attributes:
    logits: (n_steps, 10) filtered output logits per step.
    probabilities: (10,) softmax of the readout-window mean logits.
    predicted_class: argmax of `probabilities`, ties toward the lowest id.
    trace: Recorded layer activity if `record_traces` was set.
    spike_count: Spikes emitted by all neuron layers together.
    final_state: Network state after the last step.
  """

  logits: np.ndarray
  probabilities: np.ndarray
  predicted_class: int
  trace: SpikeTrace | None
  spike_count: int
  final_state: convert_lib.NetworkState


def _readout(logits: jax.Array, readout_window: int) -> jax.Array:
  """Softmax of the mean over the trailing window; logits are (T, ..., 10)."""
  window = logits[-readout_window:]
  # Averaged relative to the last step, so a constant window averages to
  # exactly that constant.
  last = window[-1]
  return math_utils.softmax(last + jnp.mean(window - last, axis=0))


@functools.partial(
    jax_utils.jit,
    static_argnames=(
        'spec',
        'mode',
        'max_spikes_per_step',
        'n_steps',
        'trace_layer',
    ),
)
def _run(
    params: model_lib.ModelParams,
    images: jax.Array,
    state: convert_lib.NetworkState,
    s: jax.Array,
    tau: jax.Array,
    dt: jax.Array,
    *,
    spec: model_lib.ModelSpec,
    mode: neurons.NeuronMode,
    max_spikes_per_step: int,
    n_steps: int,
    trace_layer: int | None,
):
  """Simulates a batch of presentations.

  Args:
    params: Network parameters.
    images: (B, C, H, W) inputs, held constant.
    state: Batched initial state (leading axis B on every leaf).
    s: Firing-rate scale.
    tau: Synapse time constant.
    dt: Timestep.
    spec: Layer stack.
    mode: Neuron model.
    max_spikes_per_step: Spike cap per neuron and step.
    n_steps: Steps to simulate.
    trace_layer: Ordinal of the neuron layer to record, or None.

  Returns:
    (final state, per-step logits (T, B, 10), recorded amplitudes (T, B, N) or
    None, spike counts per presentation (B,)).
  """
  names = spec.layer_names()
  neuron_idx = convert_lib.neuron_layer_indices(spec)
  first = neuron_idx[0] if neuron_idx else len(spec.layers)
  batch = images.shape[0]
  # Layers ahead of the first neuron layer only ever see the constant input.
  drive = model_lib.apply_layers(spec, params, images, 0, first)

  def step(carry, unused_x):
    del unused_x
    voltages, synapses, output = carry
    new_voltages, new_synapses = [], []
    count = jnp.zeros((batch,), dtype=drive.dtype)
    recorded = None
    x = drive
    k = 0
    for i in range(first, len(spec.layers)):
      layer = spec.layers[i]
      if not isinstance(layer, layers_lib.ReLU):
        x = layer.apply(params.get(names[i], {}), x)
        continue
      if mode == neurons.NeuronMode.RATE:
        a = neurons.rate_response(x)
        v = voltages[k]
      else:
        n, v = neurons.integrate_and_fire(
            voltages[k], x, s, dt, max_spikes_per_step
        )
        a = n / (s * dt)
        count = count + jnp.sum(n.reshape(batch, -1), axis=-1)
      if k == trace_layer:
        recorded = a.reshape(batch, -1)
      y = neurons.lowpass_step(synapses[k], a, tau, dt)
      new_voltages.append(v)
      new_synapses.append(y)
      x = y
      k += 1
    output = neurons.lowpass_step(output, x, tau, dt)
    carry = (tuple(new_voltages), tuple(new_synapses), output)
    return carry, (output, recorded, count)

  init = (state.voltages, state.synapses, state.output)
  (voltages, synapses, output), (logits, recorded, counts) = jax.lax.scan(
      step, init, None, length=n_steps
  )
  final_state = convert_lib.NetworkState(
      voltages=voltages, synapses=synapses, output=output
  )
  return final_state, logits, recorded, jnp.sum(counts, axis=0)


def _check_trace_layer(net: convert_lib.SpikingNetwork, cfg: SimConfig) -> int:
  n_layers = len(net.neuron_layers)
  if cfg.trace_layer >= n_layers:
    raise errors.ConfigError(
        f'trace_layer {cfg.trace_layer} does not exist; the network has'
        f' {n_layers} neuron layers.'
    )
  return net.neuron_layers[cfg.trace_layer]


def _run_batch(
    net: convert_lib.SpikingNetwork,
    images: jax.Array,
    state: convert_lib.NetworkState,
    cfg: SimConfig,
    trace_layer: int | None,
):
  dtype = jax_utils.float_dtype()
  return _run(
      net.params,
      images,
      state,
      jnp.asarray(net.firing_rate_scale, dtype=dtype),
      jnp.asarray(net.synapse_tau, dtype=dtype),
      jnp.asarray(net.dt, dtype=dtype),
      spec=net.spec,
      mode=net.mode,
      max_spikes_per_step=net.max_spikes_per_step,
      n_steps=cfg.n_steps,
      trace_layer=trace_layer,
  )


def simulate(
    net: convert_lib.SpikingNetwork,
    image: np.ndarray | jax.Array,
    cfg: SimConfig | None = None,
) -> SimResult:
  """Presents one image, starting from the network's current state.

  Args:
    net: The network. Use `convert_lib.reset` for a fresh presentation.
    image: (1, 28, 28) or (28, 28) input with pixels in [0, 1].
    cfg: Presentation settings. Defaults to `SimConfig()`.

  Returns:
    The per-step logits, readout and optional trace. `final_state` can be fed
    back through `convert_lib.with_state` to continue the presentation.

  Raises:
    ConfigError: if readout_window > n_steps or trace_layer does not exist.
    DimensionError: if the image does not match the network input.
  """
  cfg = cfg if cfg is not None else SimConfig()
  cfg.sanity_check()
  trace_ordinal = None
  trace_index = None
  if cfg.record_traces:
    trace_index = _check_trace_layer(net, cfg)
    trace_ordinal = cfg.trace_layer
  images = jnp.asarray(image, dtype=jax_utils.float_dtype())
  if images.ndim == len(net.spec.input_shape) - 1:
    images = images[None]
  images = images[None]
  model_lib.check_batch(net.spec, images)
  state = jax.tree_util.tree_map(lambda a: a[None], net.state)
  final_state, logits, recorded, counts = _run_batch(
      net, images, state, cfg, trace_ordinal
  )
  logits = logits[:, 0]
  probabilities = np.asarray(_readout(logits, cfg.readout_window))
  trace = None
  if recorded is not None:
    trace = SpikeTrace(
        layer=trace_index,
        amplitudes=np.asarray(recorded[:, 0]),
        dt=net.dt,
        neuron_shape=net.spec.shapes()[trace_index + 1],
    )
  return SimResult(
      logits=np.asarray(logits),
      probabilities=probabilities,
      predicted_class=int(math_utils.predict_class(probabilities)),
      trace=trace,
      spike_count=int(round(float(counts[0]))),
      final_state=jax.tree_util.tree_map(lambda a: a[0], final_state),
  )


def simulation_probabilities(
    net: convert_lib.SpikingNetwork,
    images: np.ndarray,
    cfg: SimConfig | None = None,
    parallel: bool | None = None,
    chunk_size: int | None = None,
) -> np.ndarray:
  """Readout probabilities (N, 10) of independent fresh presentations.

  Args:
    net: The network; its current state is ignored, every image starts from
      zero state.
    images: (N, 28, 28) or (N, 1, 28, 28) inputs.
    cfg: Presentation settings.
    parallel: Vectorize chunks of images (True) or loop one by one (False).
      Defaults to `cfg.parallel`.
    chunk_size: Images per vectorized chunk. Defaults to `cfg.chunk_size`.

  Returns:
    Per-image probabilities, in input order.
  """
  cfg = cfg if cfg is not None else SimConfig()
  cfg.sanity_check()
  parallel = cfg.parallel if parallel is None else parallel
  chunk_size = cfg.chunk_size if chunk_size is None else chunk_size
  if not parallel:
    chunk_size = 1
  images = np.asarray(images)
  if images.ndim == len(net.spec.input_shape):
    images = images[:, None]
  zero = convert_lib.zero_state(net.spec)
  outputs = []
  for start in range(0, images.shape[0], chunk_size):
    chunk = jnp.asarray(
        images[start : start + chunk_size], dtype=jax_utils.float_dtype()
    )
    model_lib.check_batch(net.spec, chunk)
    b = chunk.shape[0]
    state = jax.tree_util.tree_map(
        lambda a, b=b: jnp.broadcast_to(a, (b,) + a.shape), zero
    )
    _, logits, _, _ = _run_batch(net, chunk, state, cfg, None)
    outputs.append(np.asarray(_readout(logits, cfg.readout_window)))
  if not outputs:
    return np.zeros((0, net.spec.num_classes))
  return np.concatenate(outputs)


def batch_simulate(
    net: convert_lib.SpikingNetwork,
    ds: dataset_lib.Dataset,
    cfg: SimConfig | None = None,
    parallel: bool | None = None,
    chunk_size: int | None = None,
) -> trainer.Evaluation:
  """Simulates every example of `ds` from zero state and aggregates.

  Aggregation is `trainer.summarize_predictions`, the same as the ANN
  evaluation. Parallel and sequential runs give the same predictions.

  Raises:
    EmptySubsetError: if `ds` is empty.
  """
  if len(ds) == 0:
    raise errors.EmptySubsetError('Cannot simulate an empty dataset.')
  cfg = cfg if cfg is not None else SimConfig()
  start = time.time()
  probabilities = simulation_probabilities(
      net, ds.as_batch(), cfg, parallel=parallel, chunk_size=chunk_size
  )
  elapsed = time.time() - start
  if jax.config.read('jax_enable_x64'):
    precision = 'float64'
  else:
    precision = 'float32'
  logging.info(
      'Simulated %d %s presentations of %d steps at %s in %.2fs (%.1f'
      ' images/s).',
      len(ds),
      net.mode.value,
      cfg.n_steps,
      precision,
      elapsed,
      len(ds) / max(elapsed, 1e-9),
  )
  return trainer.summarize_predictions(probabilities, ds.labels)


def write_trace(trace: SpikeTrace, path: str | os.PathLike) -> str:
  """Writes one `step,neuron,amplitude` row per nonzero entry of `trace`."""
  steps, neuron_ids, amplitudes = trace.events()
  frame = pd.DataFrame({
      'step': steps.astype(np.int64),
      'neuron': neuron_ids.astype(np.int64),
      'amplitude': amplitudes,
  })
  path = os.fspath(path)
  directory = os.path.dirname(path)
  if directory:
    os.makedirs(directory, exist_ok=True)
  frame.to_csv(path, index=False, columns=list(TRACE_COLUMNS))
  return path


def read_trace(
    path: str | os.PathLike,
    n_steps: int,
    n_neurons: int,
    dt: float = 0.001,
    layer: int = 0,
) -> SpikeTrace:
  """Rebuilds a dense SpikeTrace from a file written by `write_trace`.

  Raises:
    ValidationError: if the columns differ or an event lies outside the
      given step/neuron ranges.
  """
  frame = pd.read_csv(path)
  if tuple(frame.columns) != TRACE_COLUMNS:
    raise errors.ValidationError(
        f'{path} has columns {list(frame.columns)}, expected'
        f' {list(TRACE_COLUMNS)}.'
    )
  steps = frame['step'].to_numpy(dtype=np.int64)
  neuron_ids = frame['neuron'].to_numpy(dtype=np.int64)
  if len(frame) and (
      steps.min() < 0
      or steps.max() >= n_steps
      or neuron_ids.min() < 0
      or neuron_ids.max() >= n_neurons
  ):
    raise errors.ValidationError(
        f'{path} has events outside {n_steps} steps x {n_neurons} neurons.'
    )
  amplitudes = np.zeros((n_steps, n_neurons))
  amplitudes[steps, neuron_ids] = frame['amplitude'].to_numpy(dtype=np.float64)
  return SpikeTrace(layer=layer, amplitudes=amplitudes, dt=dt)
