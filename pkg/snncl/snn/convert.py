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

"""Conversion of a trained classifier into a spiking network.

Every ReLU becomes a neuron layer followed by a lowpass synapse. All other
layers keep their weights and act on the filtered activity of the layer
before them. The output layer stays non-spiking.
"""

from __future__ import annotations

import dataclasses
import os

import chex
import jax
from jax import numpy as jnp
from snncl import errors
from snncl import jax_utils
from snncl.ann import checkpoint
from snncl.ann import layers as layers_lib
from snncl.ann import model as model_lib
from snncl.snn import neurons

NeuronMode = neurons.NeuronMode

KIND_SPIKING_NETWORK = 'spiking_network'

# Layer kinds a network may contain to be convertible.
SUPPORTED_LAYERS = (
    layers_lib.Conv2D,
    layers_lib.MaxPool2D,
    layers_lib.Dense,
    layers_lib.ReLU,
    layers_lib.Flatten,
)


@chex.dataclass(frozen=True)
class NetworkState:
  """Per-example simulation state, without a batch axis.

  Attributes:
    voltages: Membrane potentials of every neuron layer, in layer order.
    synapses: Lowpass states on the output of every neuron layer.
    output: Lowpass state of the logits.
  """

  voltages: tuple[jax.Array, ...]
  synapses: tuple[jax.Array, ...]
  output: jax.Array


@dataclasses.dataclass(frozen=True, eq=False)
class SpikingNetwork:
  """A converted network.

  Attributes:
    spec: Layer stack of the source model.
    params: The source model's parameter arrays (shared, never modified).
    mode: Rate or spiking neurons.
    firing_rate_scale: s > 0. Neuron drive is multiplied by s and each spike
      carries 1 / (s * dt).
    synapse_tau: Lowpass time constant in seconds, >= 0.
    dt: Timestep in seconds, > 0.
    max_spikes_per_step: Most spikes one neuron may emit per step.
    state: Current membrane and filter state.
    source_seed: Seed of the source model.
  """

  spec: model_lib.ModelSpec
  params: model_lib.ModelParams
  mode: NeuronMode = NeuronMode.SPIKING
  firing_rate_scale: float = 15.0
  synapse_tau: float = 0.001
  dt: float = 0.001
  max_spikes_per_step: int = 1
  state: NetworkState | None = None
  source_seed: int = 0

  def __post_init__(self):
    if self.firing_rate_scale <= 0:
      raise errors.ValidationError(
          f'firing_rate_scale must be > 0, got {self.firing_rate_scale}.'
      )
    if self.synapse_tau < 0:
      raise errors.ValidationError(
          f'synapse_tau must be >= 0, got {self.synapse_tau}.'
      )
    if self.dt <= 0:
      raise errors.ValidationError(f'dt must be > 0, got {self.dt}.')
    if self.max_spikes_per_step < 1:
      raise errors.ValidationError(
          f'max_spikes_per_step must be >= 1, got {self.max_spikes_per_step}.'
      )
    if self.state is None:
      object.__setattr__(self, 'state', zero_state(self.spec))

  @property
  def neuron_layers(self) -> tuple[int, ...]:
    """Indices into `spec.layers` of the layers simulated as neurons."""
    return neuron_layer_indices(self.spec)

  def conversion_params(self) -> dict[str, object]:
    return {
        'mode': self.mode.value,
        'firing_rate_scale': self.firing_rate_scale,
        'synapse_tau': self.synapse_tau,
        'dt': self.dt,
        'max_spikes_per_step': self.max_spikes_per_step,
    }


def neuron_layer_indices(spec: model_lib.ModelSpec) -> tuple[int, ...]:
  return tuple(
      i
      for i, layer in enumerate(spec.layers)
      if isinstance(layer, layers_lib.ReLU)
  )


def zero_state(spec: model_lib.ModelSpec) -> NetworkState:
  """All membranes and filters at zero."""
  shapes = spec.shapes()
  dtype = jax_utils.float_dtype()
  # The shape after layer i is shapes[i + 1]; ReLUs keep shapes.
  neuron_shapes = [shapes[i + 1] for i in neuron_layer_indices(spec)]
  return NetworkState(
      voltages=tuple(jnp.zeros(s, dtype=dtype) for s in neuron_shapes),
      synapses=tuple(jnp.zeros(s, dtype=dtype) for s in neuron_shapes),
      output=jnp.zeros((spec.num_classes,), dtype=dtype),
  )


def convert(
    model: model_lib.TrainedModel,
    mode: NeuronMode | str = NeuronMode.SPIKING,
    firing_rate_scale: float = 15.0,
    synapse_tau: float = 0.001,
    dt: float = 0.001,
    max_spikes_per_step: int = 1,
) -> SpikingNetwork:
  """Swaps every ReLU of `model` for a neuron layer.

  Args:
    model: Source model. Its parameters are shared, not copied or modified.
    mode: "rate" or "spiking".
    firing_rate_scale: s > 0.
    synapse_tau: Synapse time constant in seconds, >= 0; 0 disables filtering.
    dt: Simulation timestep in seconds, > 0.
    max_spikes_per_step: Spikes a neuron may emit per step, >= 1.

  Returns:
    A network with zeroed state.

  Raises:
    ConversionError: if the model contains a layer kind that has no spiking
      counterpart.
    ValidationError: if a conversion parameter is out of range.
  """
  for i, layer in enumerate(model.spec.layers):
    if not isinstance(layer, SUPPORTED_LAYERS):
      raise errors.ConversionError(
          f'Layer {i} ({getattr(layer, "tag", type(layer).__name__)}) cannot'
          ' be converted; supported kinds are'
          f' {[cls.tag for cls in SUPPORTED_LAYERS]}.'
      )
  return SpikingNetwork(
      spec=model.spec,
      params=model.params,
      mode=NeuronMode(mode),
      firing_rate_scale=float(firing_rate_scale),
      synapse_tau=float(synapse_tau),
      dt=float(dt),
      max_spikes_per_step=int(max_spikes_per_step),
      source_seed=model.seed,
  )


def reset(net: SpikingNetwork) -> SpikingNetwork:
  """Returns `net` with every membrane potential and filter state at zero."""
  return dataclasses.replace(net, state=zero_state(net.spec))


def with_state(net: SpikingNetwork, state: NetworkState) -> SpikingNetwork:
  """Returns `net` continuing from `state`, e.g. a SimResult's final state."""
  return dataclasses.replace(net, state=state)


def source_model(net: SpikingNetwork) -> model_lib.TrainedModel:
  """The TrainedModel view of the network's weights."""
  return model_lib.TrainedModel(
      spec=net.spec, params=net.params, seed=net.source_seed
  )


def save_network(net: SpikingNetwork, path: str | os.PathLike) -> str:
  """Writes the source weights plus conversion parameters to `path`."""
  return checkpoint.write_archive(
      path,
      source_model(net),
      kind=KIND_SPIKING_NETWORK,
      extra_meta={'conversion': net.conversion_params()},
  )


def load_network(path: str | os.PathLike) -> SpikingNetwork:
  """Reads a network written by `save_network`, with zeroed state.

  Raises:
    ValidationError: if `path` does not hold a spiking network.
  """
  model, meta = checkpoint.read_archive(path)
  if meta['kind'] != KIND_SPIKING_NETWORK:
    raise errors.ValidationError(
        f'{path} holds a {meta["kind"]}, not a {KIND_SPIKING_NETWORK}.'
    )
  return convert(model, **meta['conversion'])
