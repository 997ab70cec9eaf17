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

"""The class-incremental forgetting experiment.

For every increment the classifier is trained on that increment's classes
only, then evaluated once on the full test set. The same weights are
converted to a spiking network and to any configured variants of it, for
instance at another firing-rate scale. Each is evaluated on the same examples.
Every reported number is derived from those per-example probabilities:

  - the accuracy matrix A[i][j], accuracy on group j's test examples after
    increment i (j <= i),
  - accuracy on the current group, on all seen classes and on the full test
    set,
  - accuracy and retention statistics on the previously trained (forgotten)
    classes.

Optionally one fixed test image is re-simulated with traces after every
evaluated increment, showing how its spiking activity and prediction change
as the network forgets.

Use the SNNCL_COMPILATION_ENABLED environment variable to turn jax
compilation off and on.
"""

from __future__ import annotations

from collections.abc import Iterator, Mapping, Sequence
import dataclasses
import json
import os
import time
from typing import Any

from absl import logging
import jax
import numpy as np
from snncl import errors
from snncl import math_utils
from snncl.ann import checkpoint
from snncl.ann import model as model_lib
from snncl.ann import optimizer as optimizer_lib
from snncl.ann import trainer
from snncl.config import config_args
from snncl.config import runtime_params
from snncl.data import dataset as dataset_lib
from snncl.snn import convert as convert_lib
from snncl.snn import simulator
from snncl.spectators import spectator as spectator_lib

ANN_TAG, SNN_TAG = runtime_params.RESERVED_TAGS
PARTIAL_REPORT_FILENAME = 'partial_report.json'
REPORT_FORMAT_VERSION = 2

# Config entries that describe where files live rather than the experiment.
_LOCATION_KEYS = ('output_dir', 'dataset.data_dir')


@dataclasses.dataclass(frozen=True)
class RetentionStats:
  """What a model still knows about classes it is no longer trained on.

  Attributes:
    mean_true_class_probability: Mean over examples of p[true label].
    rank_histogram: Counts of the true class's rank 1..10 in the descending
      probability order (index 0 is rank 1), lowest class id first on ties.
    rank1_fraction: rank_histogram[0] / number of examples.
  """

  mean_true_class_probability: float
  rank_histogram: tuple[int, ...]
  rank1_fraction: float


def retention_metric(
    probabilities: np.ndarray,
    labels: np.ndarray,
    previously_trained: Sequence[int],
) -> RetentionStats:
  """Mean true-class probability and true-class rank histogram.

  Args:
    probabilities: (N, n) per-example probabilities.
    labels: (N,) true labels.
    previously_trained: Classes trained in earlier increments. Every label
      must be one of them.

  Returns:
    The retention statistics.

  Raises:
    EmptySubsetError: if there are no examples.
    ValidationError: if a label is not a previously trained class.
  """
  probabilities = np.asarray(probabilities)
  labels = np.asarray(labels)
  if labels.shape[0] == 0:
    raise errors.EmptySubsetError('Retention needs at least one example.')
  outside = ~dataset_lib.class_mask(labels, previously_trained)
  if outside.any():
    raise errors.ValidationError(
        f'Labels {sorted(set(labels[outside].tolist()))} are not among the'
        f' previously trained classes {sorted(previously_trained)}.'
    )
  n_classes = probabilities.shape[-1]
  p_true = np.take_along_axis(probabilities, labels[:, None], axis=-1)[:, 0]
  ranks = np.asarray(math_utils.true_class_rank(probabilities, labels))
  histogram = np.bincount(ranks - 1, minlength=n_classes)
  return RetentionStats(
      mean_true_class_probability=float(np.mean(p_true)),
      rank_histogram=tuple(int(c) for c in histogram),
      rank1_fraction=float(histogram[0] / labels.shape[0]),
  )


@dataclasses.dataclass
class ModelEval:
  """Per-increment results of one model variant.

  All lists are aligned with `increments`. Entries about forgotten classes
  are None at the first increment, where nothing was trained before.

  Attributes:
    tag: Model variant, e.g. "ann" or "snn".
    groups: Class groups of the schedule, in training order.
    increments: Evaluated increment indices.
    accuracy_matrix: Row r holds A[i][0..i] for i = increments[r].
    current_acc: A[i][i].
    cumulative_seen_acc: Accuracy over test examples of all seen classes.
    full_test_acc: Accuracy over the full test set.
    forgotten_acc: Accuracy over previously trained classes.
    retention_mean: Mean true-class probability over previously trained
      classes.
    retention_rank_hist: True-class rank histogram over previously trained
      classes.
    rank1_frac: Fraction of those examples whose true class ranks first.
    probabilities: Per-example (N, 10) probabilities of every evaluated
      increment. Not serialized.
  """

  tag: str
  groups: tuple[tuple[int, ...], ...]
  increments: list[int] = dataclasses.field(default_factory=list)
  accuracy_matrix: list[list[float]] = dataclasses.field(default_factory=list)
  current_acc: list[float] = dataclasses.field(default_factory=list)
  cumulative_seen_acc: list[float] = dataclasses.field(default_factory=list)
  full_test_acc: list[float] = dataclasses.field(default_factory=list)
  forgotten_acc: list[float | None] = dataclasses.field(default_factory=list)
  retention_mean: list[float | None] = dataclasses.field(default_factory=list)
  retention_rank_hist: list[list[int] | None] = dataclasses.field(
      default_factory=list
  )
  rank1_frac: list[float | None] = dataclasses.field(default_factory=list)
  probabilities: list[np.ndarray] = dataclasses.field(
      default_factory=list, repr=False
  )

  def add(self, increment: int, evaluation: trainer.Evaluation) -> None:
    """Derives and appends every statistic of one evaluated increment."""
    schedule = dataset_lib.IncrementSchedule(
        groups=self.groups, group_size=len(self.groups[0])
    )
    row = [
        evaluation.accuracy_on(self.groups[j]) for j in range(increment + 1)
    ]
    self.increments.append(increment)
    self.accuracy_matrix.append(row)
    self.current_acc.append(row[-1])
    self.cumulative_seen_acc.append(
        evaluation.accuracy_on(schedule.seen_classes(increment))
    )
    self.full_test_acc.append(evaluation.accuracy)
    previous = schedule.previous_classes(increment)
    if previous:
      mask = dataset_lib.class_mask(evaluation.labels, previous)
      stats = retention_metric(
          evaluation.probabilities[mask], evaluation.labels[mask], previous
      )
      self.forgotten_acc.append(evaluation.accuracy_on(previous))
      self.retention_mean.append(stats.mean_true_class_probability)
      self.retention_rank_hist.append(list(stats.rank_histogram))
      self.rank1_frac.append(stats.rank1_fraction)
    else:
      self.forgotten_acc.append(None)
      self.retention_mean.append(None)
      self.retention_rank_hist.append(None)
      self.rank1_frac.append(None)
    self.probabilities.append(evaluation.probabilities)

  def to_dict(self) -> dict[str, Any]:
    data = dataclasses.asdict(self)
    del data['probabilities']
    data['groups'] = [list(g) for g in self.groups]
    return data

  @classmethod
  def from_dict(cls, data: Mapping[str, Any]) -> ModelEval:
    data = dict(data)
    data['groups'] = tuple(tuple(g) for g in data['groups'])
    return cls(**data)


# Statistics compared between model variants.
COMPARED_FIELDS = (
    'cumulative_seen_acc',
    'full_test_acc',
    'forgotten_acc',
    'retention_mean',
    'rank1_frac',
)


@dataclasses.dataclass(frozen=True)
class Comparison:
  """Per-increment differences candidate - baseline.

  Attributes:
    candidate: Tag of the compared model.
    baseline: Tag of the reference model.
    increments: Evaluated increments, shared by both models.
    deltas: Field name (see COMPARED_FIELDS) to per-increment differences;
      None where either side is undefined.
    reproduced: Whether the candidate's forgotten-class accuracy at the last
      increment is at least the baseline's. None if nothing was forgotten.
  """

  candidate: str
  baseline: str
  increments: tuple[int, ...]
  deltas: dict[str, tuple[float | None, ...]]
  reproduced: bool | None

  def to_dict(self) -> dict[str, Any]:
    return {
        'candidate': self.candidate,
        'baseline': self.baseline,
        'increments': list(self.increments),
        'deltas': {k: list(v) for k, v in self.deltas.items()},
        'reproduced': self.reproduced,
    }

  @classmethod
  def from_dict(cls, data: Mapping[str, Any]) -> Comparison:
    return cls(
        candidate=data['candidate'],
        baseline=data['baseline'],
        increments=tuple(data['increments']),
        deltas={k: tuple(v) for k, v in data['deltas'].items()},
        reproduced=data['reproduced'],
    )


def _delta(a: float | None, b: float | None) -> float | None:
  if a is None or b is None:
    return None
  return a - b


def compare_models(
    reports: Sequence[ModelEval], baseline: str = ANN_TAG
) -> tuple[Comparison, ...]:
  """Aligns every model with the baseline model and takes differences.

  Args:
    reports: Model evaluations of one experiment, baseline included.
    baseline: Tag of the model the others are compared to.

  Returns:
    One Comparison per non-baseline model, in input order.

  Raises:
    ValidationError: if the baseline is missing, or a model was evaluated on
      a different schedule or at different increments.
  """
  by_tag = {r.tag: r for r in reports}
  if baseline not in by_tag:
    raise errors.ValidationError(
        f'Baseline {baseline!r} not among {sorted(by_tag)}.'
    )
  base = by_tag[baseline]
  comparisons = []
  for report in reports:
    if report.tag == baseline:
      continue
    if report.groups != base.groups or report.increments != base.increments:
      raise errors.ValidationError(
          f'Model {report.tag!r} was evaluated on schedule {report.groups} at'
          f' increments {report.increments}, but {baseline!r} on'
          f' {base.groups} at {base.increments}.'
      )
    deltas = {
        name: tuple(
            _delta(a, b)
            for a, b in zip(getattr(report, name), getattr(base, name))
        )
        for name in COMPARED_FIELDS
    }
    last = deltas['forgotten_acc'][-1] if report.increments else None
    comparisons.append(
        Comparison(
            candidate=report.tag,
            baseline=baseline,
            increments=tuple(report.increments),
            deltas=deltas,
            reproduced=None if last is None else bool(last >= 0.0),
        )
    )
  return tuple(comparisons)


@dataclasses.dataclass(frozen=True, eq=False)
class ImageSnapshot:
  """One fixed test image presented to the spiking network after an increment.

  Attributes:
    increment: Increment whose trained weights were converted.
    image_index: Index of the image in the test set.
    label: True class of the image.
    probabilities: (10,) readout probabilities.
    predicted_class: argmax of `probabilities`.
    spike_count: Spikes emitted by all neuron layers.
    trace: Recorded layer activity. Not serialized.
    image: The presented (28, 28) image. Not serialized.
  """

  increment: int
  image_index: int
  label: int
  probabilities: np.ndarray
  predicted_class: int
  spike_count: int
  trace: simulator.SpikeTrace | None = None
  image: np.ndarray | None = dataclasses.field(default=None, repr=False)

  def to_dict(self) -> dict[str, Any]:
    return {
        'increment': self.increment,
        'image_index': self.image_index,
        'label': self.label,
        'probabilities': [float(p) for p in self.probabilities],
        'predicted_class': self.predicted_class,
        'spike_count': self.spike_count,
    }

  @classmethod
  def from_dict(cls, data: Mapping[str, Any]) -> ImageSnapshot:
    return cls(
        increment=int(data['increment']),
        image_index=int(data['image_index']),
        label=int(data['label']),
        probabilities=np.asarray(data['probabilities'], dtype=np.float64),
        predicted_class=int(data['predicted_class']),
        spike_count=int(data['spike_count']),
    )


@dataclasses.dataclass
class EvalReport:
  """Everything an experiment produced.

  Attributes:
    config: Flat experiment config (see `config_args.flatten`) without the
      file locations.
    dataset: Dataset source name.
    groups: Class groups in training order.
    test_size: Number of test examples.
    test_class_counts: Test examples per class.
    models: Tag to per-increment results.
    comparisons: Every non-ANN model against the ANN.
    snapshots: The fixed test image re-simulated after every evaluated
      increment, if the config names one.
    complete: False for a report flushed after a failure.
    test_labels: Test labels in evaluation order. Not serialized.
    timings: Phase name to per-increment wall-clock seconds. Not serialized
      with the report, see `report.write_timings`.
  """

  config: dict[str, Any]
  dataset: str
  groups: tuple[tuple[int, ...], ...]
  test_size: int
  test_class_counts: list[int]
  models: dict[str, ModelEval]
  comparisons: tuple[Comparison, ...] = ()
  snapshots: list[ImageSnapshot] = dataclasses.field(default_factory=list)
  complete: bool = True
  test_labels: np.ndarray | None = dataclasses.field(default=None, repr=False)
  timings: dict[str, list[float]] = dataclasses.field(
      default_factory=dict, repr=False
  )

  def to_dict(self) -> dict[str, Any]:
    return {
        'format_version': REPORT_FORMAT_VERSION,
        'config': self.config,
        'dataset': self.dataset,
        'groups': [list(g) for g in self.groups],
        'test_size': self.test_size,
        'test_class_counts': list(self.test_class_counts),
        'models': {tag: m.to_dict() for tag, m in self.models.items()},
        'comparisons': [c.to_dict() for c in self.comparisons],
        'snapshots': [s.to_dict() for s in self.snapshots],
        'complete': self.complete,
    }

  @classmethod
  def from_dict(cls, data: Mapping[str, Any]) -> EvalReport:
    version = data.get('format_version')
    if version != REPORT_FORMAT_VERSION:
      raise errors.ValidationError(
          f'Report format version {version} is not {REPORT_FORMAT_VERSION}.'
      )
    return cls(
        config=dict(data['config']),
        dataset=data['dataset'],
        groups=tuple(tuple(g) for g in data['groups']),
        test_size=int(data['test_size']),
        test_class_counts=list(data['test_class_counts']),
        models={
            tag: ModelEval.from_dict(m) for tag, m in data['models'].items()
        },
        comparisons=tuple(
            Comparison.from_dict(c) for c in data['comparisons']
        ),
        snapshots=[ImageSnapshot.from_dict(s) for s in data['snapshots']],
        complete=bool(data['complete']),
    )


def report_json(report: EvalReport) -> str:
  """Deterministic JSON text of `report`."""
  return json.dumps(report.to_dict(), indent=2, sort_keys=True) + '\n'


def load_experiment_data(
    dataset_cfg: runtime_params.DatasetConfig, seed: int
) -> tuple[dataset_lib.Dataset, dataset_lib.Dataset]:
  """Returns the (train, test) splits the config asks for."""
  if dataset_cfg.source == dataset_lib.DatasetSource.SYNTHETIC:
    train = dataset_lib.make_synthetic_dataset(
        dataset_cfg.synthetic_train_per_class, seed=seed, split='train'
    )
    test = dataset_lib.make_synthetic_dataset(
        dataset_cfg.synthetic_test_per_class, seed=seed, split='test'
    )
    return train, test
  train = dataset_lib.load_dataset(
      dataset_cfg.source, 'train', dataset_cfg.data_dir
  )
  test = dataset_lib.load_dataset(
      dataset_cfg.source, 'test', dataset_cfg.data_dir
  )
  return train, test


def build_schedule(
    dataset_cfg: runtime_params.DatasetConfig, train: dataset_lib.Dataset
) -> dataset_lib.IncrementSchedule:
  return dataset_lib.build_increments(
      train.classes, dataset_cfg.group_size, dataset_cfg.class_order
  )


def optimizer_hyperparameters(
    training: runtime_params.TrainingConfig,
) -> optimizer_lib.OptimizerState:
  return optimizer_lib.OptimizerState(
      learning_rate=training.learning_rate,
      beta1=training.beta1,
      beta2=training.beta2,
      eps=training.eps,
      l2=training.l2,
  )


def convert_model(
    model: model_lib.TrainedModel,
    conversion: runtime_params.ConversionConfig,
) -> convert_lib.SpikingNetwork:
  return convert_lib.convert(
      model,
      mode=conversion.mode,
      firing_rate_scale=conversion.firing_rate_scale,
      synapse_tau=conversion.synapse_tau,
      dt=conversion.dt,
      max_spikes_per_step=conversion.max_spikes_per_step,
  )


def spiking_conversions(
    cfg: runtime_params.ExperimentConfig,
) -> list[tuple[str, runtime_params.ConversionConfig]]:
  """(tag, settings) of every spiking model, the main conversion first."""
  return [(SNN_TAG, cfg.conversion)] + [
      (variant.name, variant.resolve(cfg.conversion))
      for variant in cfg.snn_variants
  ]


def take_snapshot(
    net: convert_lib.SpikingNetwork,
    test: dataset_lib.Dataset,
    image_index: int,
    increment: int,
    sim_cfg: runtime_params.SimConfig,
) -> ImageSnapshot:
  """Presents one test image from zero state, recording the traced layer."""
  result = simulator.simulate(
      convert_lib.reset(net),
      test.images[image_index],
      dataclasses.replace(sim_cfg, record_traces=True),
  )
  return ImageSnapshot(
      increment=increment,
      image_index=image_index,
      label=int(test.labels[image_index]),
      probabilities=result.probabilities,
      predicted_class=result.predicted_class,
      spike_count=result.spike_count,
      trace=result.trace,
      image=np.asarray(test.images[image_index]),
  )


def iterate_increments(
    cfg: runtime_params.ExperimentConfig,
    train: dataset_lib.Dataset,
    schedule: dataset_lib.IncrementSchedule,
    checkpoint_dir: str | None = None,
) -> Iterator[tuple[int, model_lib.TrainedModel, float]]:
  """Trains the increments in order.

  Yields:
    (increment, model after training it, training wall-clock seconds).
  """
  model = model_lib.init_model(
      model_lib.architecture_spec(cfg.training.architecture), cfg.seed
  )
  hyper = optimizer_hyperparameters(cfg.training)
  for increment, group in enumerate(schedule.groups):
    start = time.time()
    model = trainer.train_increment(
        model,
        dataset_lib.subset_by_classes(train, group),
        epochs=cfg.training.epochs,
        batch_size=cfg.training.batch_size,
        opt=hyper,
        seed=cfg.seed,
        increment=increment,
    )
    elapsed = time.time() - start
    if checkpoint_dir is not None:
      checkpoint.save_checkpoint(
          model, os.path.join(checkpoint_dir, checkpoint_name(increment))
      )
    yield increment, model, elapsed


def checkpoint_name(increment: int) -> str:
  return f'increment_{increment}.npz'


def train_schedule(
    cfg: runtime_params.ExperimentConfig, checkpoint_dir: str
) -> list[str]:
  """Trains every increment without evaluating, checkpointing each one.

  Returns:
    Checkpoint paths in increment order.
  """
  train, _ = load_experiment_data(cfg.dataset, cfg.seed)
  schedule = build_schedule(cfg.dataset, train)
  os.makedirs(checkpoint_dir, exist_ok=True)
  paths = []
  for increment, model, seconds in iterate_increments(
      cfg, train, schedule, checkpoint_dir
  ):
    path = os.path.join(checkpoint_dir, checkpoint_name(increment))
    logging.info(
        'Trained increment %d on classes %s in %.2fs; final loss %s.',
        increment,
        list(schedule.groups[increment]),
        seconds,
        model.training_log[-1] if model.training_log else None,
    )
    paths.append(path)
  return paths


def _should_evaluate(
    cfg: runtime_params.ExperimentConfig, i: int, n: int
) -> bool:
  return (i + 1) % cfg.eval_every == 0 or i == n - 1


def _config_record(cfg: runtime_params.ExperimentConfig) -> dict[str, Any]:
  flat = config_args.flatten(cfg)
  for key in _LOCATION_KEYS:
    flat.pop(key, None)
  return flat


def _update_spectator(
    spectator: spectator_lib.Spectator, models: Mapping[str, ModelEval]
) -> None:
  """Observes the latest values of every model."""
  for tag, model_eval in models.items():
    for name in (
        'current_acc',
        'cumulative_seen_acc',
        'full_test_acc',
        'forgotten_acc',
        'retention_mean',
        'rank1_frac',
    ):
      spectator.observe(key=f'{tag}/{name}', data=getattr(model_eval, name)[-1])


def _flush_partial(report: EvalReport, output_dir: str) -> str:
  os.makedirs(output_dir, exist_ok=True)
  path = os.path.join(output_dir, PARTIAL_REPORT_FILENAME)
  with open(path, 'w') as f:
    f.write(report_json(report))
  logging.warning('Wrote partial report to %s.', path)
  return path


def _simulated_chunk_size(sim_cfg: runtime_params.SimConfig) -> int:
  return sim_cfg.chunk_size if sim_cfg.parallel else 1


def run_experiment(
    cfg: runtime_params.ExperimentConfig,
    spectator: spectator_lib.Spectator | None = None,
    output_dir: str | None = None,
    checkpoint_dir: str | None = None,
) -> EvalReport:
  """Runs every increment and evaluates the ANN and its spiking conversions.

  The main conversion is reported under SNN_TAG, every entry of
  `cfg.snn_variants` under its own name.

  Args:
    cfg: Experiment configuration.
    spectator: Optional observer receiving each evaluated increment's metrics.
    output_dir: If given, a partial report is written there when a phase
      fails.
    checkpoint_dir: If given, the model after every increment is saved there.

  Returns:
    The fully populated report.

  Raises:
    ConfigError: if `cfg.snapshot_image` is not a test-set index.
    Whatever a phase raises, after the partial report has been flushed.
  """
  if jax.config.read('jax_enable_x64'):
    logging.info('Precision is set at float64')
  else:
    logging.info('Precision is set at float32')
  train, test = load_experiment_data(cfg.dataset, cfg.seed)
  schedule = build_schedule(cfg.dataset, train)
  if cfg.snapshot_image is not None and cfg.snapshot_image >= len(test):
    raise errors.ConfigError(
        f'snapshot_image {cfg.snapshot_image} is out of range for a test set'
        f' of {len(test)} examples.'
    )
  conversions = spiking_conversions(cfg)
  logging.info(
      'Starting experiment on %s: %d increments %s, seed %d, spiking models'
      ' %s.',
      train.source.value,
      len(schedule),
      [list(g) for g in schedule.groups],
      cfg.seed,
      [tag for tag, _ in conversions],
  )
  tags = [ANN_TAG] + [tag for tag, _ in conversions]
  timings = {'train': [], f'{ANN_TAG}_eval': []}
  for tag, _ in conversions:
    timings[f'{tag}_convert'] = []
    timings[f'{tag}_eval'] = []
  report = EvalReport(
      config=_config_record(cfg),
      dataset=train.source.value,
      groups=schedule.groups,
      test_size=len(test),
      test_class_counts=[int(c) for c in dataset_lib.label_histogram(test)],
      models={tag: ModelEval(tag=tag, groups=schedule.groups) for tag in tags},
      test_labels=test.labels,
      timings=timings,
  )
  if spectator is not None:
    spectator.reset()
  experiment_start = time.time()
  try:
    for increment, model, train_seconds in iterate_increments(
        cfg, train, schedule, checkpoint_dir
    ):
      report.timings['train'].append(train_seconds)
      if not _should_evaluate(cfg, increment, len(schedule)):
        continue
      if spectator is not None:
        spectator.before_increment(increment)

      start = time.time()
      # Chunked like batch_simulate.
      evaluations = {
          ANN_TAG: trainer.evaluate(
              model, test, chunk_size=_simulated_chunk_size(cfg.simulation)
          )
      }
      report.timings[f'{ANN_TAG}_eval'].append(time.time() - start)

      for tag, conversion in conversions:
        start = time.time()
        net = convert_model(model, conversion)
        report.timings[f'{tag}_convert'].append(time.time() - start)

        start = time.time()
        evaluations[tag] = simulator.batch_simulate(net, test, cfg.simulation)
        report.timings[f'{tag}_eval'].append(time.time() - start)

        if tag == SNN_TAG and cfg.snapshot_image is not None:
          report.snapshots.append(
              take_snapshot(
                  net, test, cfg.snapshot_image, increment, cfg.simulation
              )
          )

      for tag in tags:
        report.models[tag].add(increment, evaluations[tag])
        logging.info(
            'Increment %d, %s: current %.4f / seen %.4f / full %.4f.',
            increment,
            tag,
            report.models[tag].current_acc[-1],
            report.models[tag].cumulative_seen_acc[-1],
            report.models[tag].full_test_acc[-1],
        )
      if spectator is not None:
        _update_spectator(spectator, report.models)
        spectator.after_increment(increment)
  except Exception:
    report.complete = False
    if output_dir is not None:
      _flush_partial(report, output_dir)
    raise

  report.comparisons = compare_models(list(report.models.values()))
  for comparison in report.comparisons:
    logging.info(
        '%s - %s forgotten-class accuracy delta at the last increment: %s'
        ' (candidate >= baseline: %s).',
        comparison.candidate,
        comparison.baseline,
        comparison.deltas['forgotten_acc'][-1],
        comparison.reproduced,
    )
  logging.info(
      'Ran %d increments in %.2f seconds of wall clock time.',
      len(schedule),
      time.time() - experiment_start,
  )
  return report
