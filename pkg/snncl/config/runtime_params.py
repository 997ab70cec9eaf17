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

"""Runtime input parameters of an experiment.

Defaults reproduce the published protocol: MNIST in five increments of two
classes, 10 epochs per increment at batch size 200, Adam at 1e-3, and a
spiking conversion with firing-rate scale 15 and 1 ms synapses.
"""

from __future__ import annotations

import dataclasses
import re

import chex
from snncl import errors
from snncl.data import dataset as dataset_lib
from snncl.snn import neurons

DatasetSource = dataset_lib.DatasetSource
NeuronMode = neurons.NeuronMode


@chex.dataclass
class DatasetConfig:
  """Which data to use and how to split it into increments."""

  # mnist, fashion-mnist or synthetic
  source: DatasetSource = DatasetSource.MNIST
  # Root directory of the IDX files. Falls back to $SNNCL_DATA_DIR.
  data_dir: str | None = None
  # classes per increment; the last group may be smaller
  group_size: int = 2
  # explicit class order; None means 0, 1, ..., 9
  class_order: tuple[int, ...] | None = None
  # synthetic datasets only: examples generated per class and split
  synthetic_train_per_class: int = 60
  synthetic_test_per_class: int = 20

  def sanity_check(self) -> None:
    if self.group_size < 1:
      raise errors.ConfigError(
          f'dataset.group_size must be >= 1, got {self.group_size}.'
      )
    if self.class_order is not None:
      order = [int(c) for c in self.class_order]
      if sorted(order) != list(range(dataset_lib.NUM_CLASSES)):
        raise errors.ConfigError(
            f'dataset.class_order must be a permutation of 0..9, got {order}.'
        )
    if min(self.synthetic_train_per_class, self.synthetic_test_per_class) < 1:
      raise errors.ConfigError('Synthetic example counts must be >= 1.')

  def __post_init__(self):
    if isinstance(self.class_order, list):
      self.class_order = tuple(self.class_order)
    self.sanity_check()


@chex.dataclass
class TrainingConfig:
  """Classifier architecture and per-increment optimization."""

  # name in snncl.ann.model.ARCHITECTURES
  architecture: str = 'reference'
  # passes over each increment's examples
  epochs: int = 10
  batch_size: int = 200
  # Adam
  learning_rate: float = 1e-3
  beta1: float = 0.9
  beta2: float = 0.999
  eps: float = 1e-8
  # weight of l2 / 2 * sum ||W||^2 (weights only)
  l2: float = 1e-4

  def sanity_check(self) -> None:
    if self.epochs < 0:
      raise errors.ConfigError(f'training.epochs must be >= 0: {self.epochs}.')
    if self.batch_size < 1:
      raise errors.ConfigError(
          f'training.batch_size must be >= 1: {self.batch_size}.'
      )
    if self.learning_rate <= 0.0:
      raise errors.ConfigError(
          f'training.learning_rate must be > 0: {self.learning_rate}.'
      )
    if self.l2 < 0.0:
      raise errors.ConfigError(f'training.l2 must be >= 0: {self.l2}.')

  def __post_init__(self):
    self.sanity_check()


@chex.dataclass
class ConversionConfig:
  """How ReLUs become neurons."""

  mode: NeuronMode = NeuronMode.SPIKING
  # dimensionless multiplier on neuron drive; spikes carry 1 / (s * dt)
  firing_rate_scale: float = 15.0
  # synapse time constant in seconds; 0 disables filtering
  synapse_tau: float = 0.001
  # simulation timestep in seconds
  dt: float = 0.001
  max_spikes_per_step: int = 1

  def sanity_check(self) -> None:
    if self.firing_rate_scale <= 0.0:
      raise errors.ConfigError(
          f'conversion.firing_rate_scale must be > 0: {self.firing_rate_scale}.'
      )
    if self.synapse_tau < 0.0:
      raise errors.ConfigError(
          f'conversion.synapse_tau must be >= 0: {self.synapse_tau}.'
      )
    if self.dt <= 0.0:
      raise errors.ConfigError(f'conversion.dt must be > 0: {self.dt}.')
    if self.max_spikes_per_step < 1:
      raise errors.ConfigError(
          'conversion.max_spikes_per_step must be >= 1:'
          f' {self.max_spikes_per_step}.'
      )

  def __post_init__(self):
    self.sanity_check()


# Model tags the harness always uses.
RESERVED_TAGS = ('ann', 'snn')
_TAG_PATTERN = re.compile(r'[a-z0-9][a-z0-9_.-]*')


@chex.dataclass
class ConversionVariant:
  """A further conversion of the same weights, evaluated as its own model.

  Fields left at None take the value of the main `conversion` section.
  """

  # model tag in the report and result file names, e.g. `snn_s10`
  name: str
  mode: NeuronMode | None = None
  firing_rate_scale: float | None = None
  synapse_tau: float | None = None
  dt: float | None = None
  max_spikes_per_step: int | None = None

  def sanity_check(self) -> None:
    if not isinstance(self.name, str) or not _TAG_PATTERN.fullmatch(
        self.name
    ):
      raise errors.ConfigError(
          f'Conversion variant name {self.name!r} must be lower-case letters,'
          ' digits, ".", "_" or "-".'
      )
    if self.name in RESERVED_TAGS:
      raise errors.ConfigError(
          f'Conversion variant name {self.name!r} is reserved.'
      )

  def resolve(self, base: ConversionConfig) -> ConversionConfig:
    """The main conversion with this variant's fields applied."""
    changes = {
        field.name: getattr(self, field.name)
        for field in dataclasses.fields(ConversionConfig)
        if getattr(self, field.name) is not None
    }
    return dataclasses.replace(base, **changes)

  def __post_init__(self):
    if isinstance(self.mode, str):
      try:
        self.mode = NeuronMode(self.mode.lower())
      except ValueError as e:
        raise errors.ConfigError(
            f'Conversion variant {self.name!r} has unknown mode'
            f' {self.mode!r}.'
        ) from e
    self.sanity_check()


@chex.dataclass
class SimConfig:
  """Presentation of one image to a spiking network."""

  # steps the image is presented for, as constant drive
  n_steps: int = 50
  # trailing steps whose logits are averaged for the readout
  readout_window: int = 20
  # whether `simulate` records a SpikeTrace
  record_traces: bool = False
  # ordinal of the recorded neuron layer; 0 is the first one
  trace_layer: int = 0
  # batch_simulate: vectorize chunks of images instead of looping
  parallel: bool = True
  chunk_size: int = 100

  def sanity_check(self) -> None:
    if self.n_steps < 1:
      raise errors.ConfigError(
          f'simulation.n_steps must be >= 1, got {self.n_steps}.'
      )
    if not 1 <= self.readout_window <= self.n_steps:
      raise errors.ConfigError(
          f'simulation.readout_window must lie in 1..n_steps={self.n_steps},'
          f' got {self.readout_window}.'
      )
    if self.trace_layer < 0:
      raise errors.ConfigError(
          f'simulation.trace_layer must be >= 0, got {self.trace_layer}.'
      )
    if self.chunk_size < 1:
      raise errors.ConfigError(
          f'simulation.chunk_size must be >= 1, got {self.chunk_size}.'
      )

  def __post_init__(self):
    self.sanity_check()


@chex.dataclass
class ExperimentConfig:
  """Everything `run_experiment` needs."""

  dataset: DatasetConfig = dataclasses.field(default_factory=DatasetConfig)
  training: TrainingConfig = dataclasses.field(default_factory=TrainingConfig)
  conversion: ConversionConfig = dataclasses.field(
      default_factory=ConversionConfig
  )
  simulation: SimConfig = dataclasses.field(default_factory=SimConfig)
  # seeds initialization and every per-epoch shuffle
  seed: int = 0
  # evaluate after every k-th increment; the last increment always is
  eval_every: int = 1
  # Directory for reports and checkpoints. If not provided, this defaults to
  # /tmp/snncl_results_<YYYYMMDD_HHMMSS>/.
  output_dir: str | None = None
  # further conversions of the same weights, each reported as its own model
  snn_variants: tuple[ConversionVariant, ...] = ()
  # test-set index of an image re-simulated with traces after every evaluated
  # increment; None disables the snapshots
  snapshot_image: int | None = None

  def sanity_check(self) -> None:
    if self.eval_every < 1:
      raise errors.ConfigError(
          f'eval_every must be >= 1, got {self.eval_every}.'
      )
    for name, cls in (
        ('dataset', DatasetConfig),
        ('training', TrainingConfig),
        ('conversion', ConversionConfig),
        ('simulation', SimConfig),
    ):
      if not isinstance(getattr(self, name), cls):
        raise errors.ConfigError(f'{name} must be a {cls.__name__}.')
    names = [variant.name for variant in self.snn_variants]
    if len(set(names)) != len(names):
      raise errors.ConfigError(f'Conversion variant names repeat: {names}.')
    for variant in self.snn_variants:
      variant.resolve(self.conversion)
    if self.snapshot_image is not None and self.snapshot_image < 0:
      raise errors.ConfigError(
          f'snapshot_image must be >= 0, got {self.snapshot_image}.'
      )

  def __post_init__(self):
    self.snn_variants = tuple(
        v if isinstance(v, ConversionVariant) else _variant_from_mapping(v)
        for v in self.snn_variants
    )
    self.sanity_check()


def _variant_from_mapping(values) -> ConversionVariant:
  try:
    return ConversionVariant(**values)
  except TypeError as e:
    raise errors.ConfigError(
        f'Invalid conversion variant {dict(values)}: {e}'
    ) from e
