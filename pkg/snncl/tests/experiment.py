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

"""Tests for the forgetting experiment harness."""

import json
import os
from unittest import mock

from absl.testing import absltest
from absl.testing import parameterized
import numpy as np
from snncl import errors
from snncl import experiment
from snncl.snn import simulator
from snncl.spectators import spectator as spectator_lib
from snncl.tests.test_lib import fixtures


def _weighted_mean(values, weights):
  return float(np.dot(values, weights) / np.sum(weights))


def _group_weights(report, groups):
  return [sum(report.test_class_counts[c] for c in g) for g in groups]


class _RecordingSpectator(spectator_lib.InMemorySpectator):
  """Also records the order of the increment hooks."""

  def __init__(self):
    super().__init__()
    self.calls = []

  def before_increment(self, increment):
    self.calls.append(('before', increment))

  def after_increment(self, increment):
    super().after_increment(increment)
    self.calls.append(('after', increment))


class RetentionMetricTest(parameterized.TestCase):
  """Retention statistics on hand-built probabilities."""

  def test_uniform_probabilities(self):
    probs = np.full((4, 10), 0.1)
    labels = np.array([0, 1, 1, 3])
    stats = experiment.retention_metric(probs, labels, (0, 1, 2, 3))
    self.assertAlmostEqual(stats.mean_true_class_probability, 0.1)
    # Ties resolve toward the lowest id, so class c ranks c + 1.
    self.assertEqual(stats.rank_histogram, (1, 2, 0, 1, 0, 0, 0, 0, 0, 0))
    self.assertAlmostEqual(stats.rank1_fraction, 0.25)

  def test_confident_and_correct(self):
    probs = np.eye(10)[[2, 3, 3]]
    stats = experiment.retention_metric(probs, np.array([2, 3, 3]), (2, 3))
    self.assertEqual(stats.mean_true_class_probability, 1.0)
    self.assertEqual(stats.rank_histogram[0], 3)
    self.assertEqual(stats.rank1_fraction, 1.0)

  def test_true_class_in_second_place(self):
    probs = np.zeros((5, 10))
    labels = np.array([0, 1, 0, 1, 1])
    probs[np.arange(5), labels] = 0.4
    probs[:, 7] = 0.6
    stats = experiment.retention_metric(probs, labels, (0, 1))
    self.assertAlmostEqual(stats.mean_true_class_probability, 0.4)
    self.assertEqual(stats.rank_histogram, (0, 5, 0, 0, 0, 0, 0, 0, 0, 0))
    self.assertEqual(stats.rank1_fraction, 0.0)

  def test_empty(self):
    with self.assertRaises(errors.EmptySubsetError):
      experiment.retention_metric(
          np.zeros((0, 10)), np.zeros((0,), dtype=int), (0,)
      )

  def test_label_not_previously_trained(self):
    with self.assertRaises(errors.ValidationError):
      experiment.retention_metric(np.full((2, 10), 0.1), np.array([0, 4]), (0,))


class CompareModelsTest(absltest.TestCase):
  """Alignment and differences between model variants."""

  def _model_eval(self, tag, forgotten, groups=((0, 1), (2, 3))):
    model_eval = experiment.ModelEval(tag=tag, groups=groups)
    model_eval.increments = [0, 1]
    model_eval.accuracy_matrix = [[0.9], [0.2, 0.9]]
    model_eval.current_acc = [0.9, 0.9]
    model_eval.cumulative_seen_acc = [0.9, 0.55]
    model_eval.full_test_acc = [0.45, 0.55]
    model_eval.forgotten_acc = [None, forgotten]
    model_eval.retention_mean = [None, 0.3]
    model_eval.retention_rank_hist = [None, [1, 1, 0, 0, 0, 0, 0, 0, 0, 0]]
    model_eval.rank1_frac = [None, 0.5]
    return model_eval

  def test_self_comparison_is_zero(self):
    ann = self._model_eval('ann', 0.2)
    twin = self._model_eval('twin', 0.2)
    (comparison,) = experiment.compare_models([ann, twin])
    self.assertEqual(comparison.candidate, 'twin')
    self.assertEqual(comparison.increments, (0, 1))
    for name in experiment.COMPARED_FIELDS:
      self.assertEqual(comparison.deltas[name][1], 0.0)
    self.assertIsNone(comparison.deltas['forgotten_acc'][0])
    self.assertTrue(comparison.reproduced)

  def test_candidate_forgets_more(self):
    (comparison,) = experiment.compare_models(
        [self._model_eval('ann', 0.2), self._model_eval('snn', 0.1)]
    )
    self.assertAlmostEqual(comparison.deltas['forgotten_acc'][1], -0.1)
    self.assertFalse(comparison.reproduced)

  def test_missing_baseline(self):
    with self.assertRaises(errors.ValidationError):
      experiment.compare_models([self._model_eval('snn', 0.1)])

  def test_mismatched_schedule(self):
    ann = self._model_eval('ann', 0.2)
    other = self._model_eval('snn', 0.2, groups=((1, 0), (2, 3)))
    with self.assertRaises(errors.ValidationError):
      experiment.compare_models([ann, other])

  def test_comparison_dict_round_trip(self):
    (comparison,) = experiment.compare_models(
        [self._model_eval('ann', 0.2), self._model_eval('snn', 0.3)]
    )
    restored = experiment.Comparison.from_dict(
        json.loads(json.dumps(comparison.to_dict()))
    )
    self.assertEqual(restored, comparison)


class RunExperimentTest(parameterized.TestCase):
  """End-to-end runs on the synthetic dataset."""

  @classmethod
  def setUpClass(cls):
    super().setUpClass()
    cls.report = experiment.run_experiment(fixtures.tiny_config())

  def test_every_increment_is_evaluated(self):
    for tag in (experiment.ANN_TAG, experiment.SNN_TAG):
      model_eval = self.report.models[tag]
      self.assertEqual(model_eval.increments, [0, 1, 2, 3, 4])
      self.assertLen(model_eval.probabilities, 5)
      self.assertEqual(model_eval.probabilities[0].shape, (50, 10))
    self.assertEqual(
        self.report.groups, ((0, 1), (2, 3), (4, 5), (6, 7), (8, 9))
    )
    self.assertEqual(self.report.test_size, 50)
    self.assertEqual(self.report.test_class_counts, [5] * 10)
    self.assertTrue(self.report.complete)

  @parameterized.parameters('ann', 'snn')
  def test_accuracy_matrix_is_lower_triangular(self, tag):
    model_eval = self.report.models[tag]
    for i, row in zip(model_eval.increments, model_eval.accuracy_matrix):
      self.assertLen(row, i + 1)
      self.assertEqual(row[-1], model_eval.current_acc[i])
      for value in row:
        self.assertBetween(value, 0.0, 1.0)

  @parameterized.parameters('ann', 'snn')
  def test_aggregates_match_matrix(self, tag):
    model_eval = self.report.models[tag]
    groups = self.report.groups
    for i, row in zip(model_eval.increments, model_eval.accuracy_matrix):
      weights = _group_weights(self.report, groups[: i + 1])
      self.assertAlmostEqual(
          model_eval.cumulative_seen_acc[i], _weighted_mean(row, weights)
      )
      if i == 0:
        self.assertIsNone(model_eval.forgotten_acc[i])
        self.assertIsNone(model_eval.retention_mean[i])
        self.assertIsNone(model_eval.retention_rank_hist[i])
        self.assertIsNone(model_eval.rank1_frac[i])
        continue
      self.assertAlmostEqual(
          model_eval.forgotten_acc[i], _weighted_mean(row[:-1], weights[:-1])
      )
      self.assertEqual(
          sum(model_eval.retention_rank_hist[i]), sum(weights[:-1])
      )
    self.assertAlmostEqual(
        model_eval.full_test_acc[-1], model_eval.cumulative_seen_acc[-1]
    )

  def test_comparison(self):
    (comparison,) = self.report.comparisons
    self.assertEqual(comparison.candidate, experiment.SNN_TAG)
    self.assertEqual(comparison.baseline, experiment.ANN_TAG)
    ann = self.report.models[experiment.ANN_TAG]
    snn = self.report.models[experiment.SNN_TAG]
    self.assertAlmostEqual(
        comparison.deltas['full_test_acc'][-1],
        snn.full_test_acc[-1] - ann.full_test_acc[-1],
    )
    self.assertEqual(
        comparison.reproduced,
        snn.forgotten_acc[-1] >= ann.forgotten_acc[-1],
    )

  def test_timings(self):
    self.assertLen(self.report.timings['train'], 5)
    self.assertLen(self.report.timings['snn_eval'], 5)

  def test_config_record_omits_locations(self):
    self.assertNotIn('output_dir', self.report.config)
    self.assertNotIn('dataset.data_dir', self.report.config)
    self.assertEqual(self.report.config['dataset.source'], 'synthetic')

  def test_is_deterministic(self):
    again = experiment.run_experiment(fixtures.tiny_config())
    self.assertEqual(
        experiment.report_json(again), experiment.report_json(self.report)
    )

  def test_report_dict_round_trip(self):
    text = experiment.report_json(self.report)
    restored = experiment.EvalReport.from_dict(json.loads(text))
    self.assertEqual(experiment.report_json(restored), text)

  def test_unknown_report_version(self):
    data = self.report.to_dict()
    data['format_version'] = 0
    with self.assertRaises(errors.ValidationError):
      experiment.EvalReport.from_dict(data)


class RunExperimentScheduleTest(parameterized.TestCase):
  """Schedules and failure handling."""

  def test_single_increment(self):
    report = experiment.run_experiment(fixtures.tiny_config(group_size=10))
    ann = report.models[experiment.ANN_TAG]
    self.assertEqual(report.groups, (tuple(range(10)),))
    self.assertEqual(ann.increments, [0])
    self.assertEqual(ann.accuracy_matrix, [[ann.full_test_acc[0]]])
    self.assertIsNone(ann.forgotten_acc[0])
    (comparison,) = report.comparisons
    self.assertIsNone(comparison.reproduced)

  def test_eval_every(self):
    spectator = _RecordingSpectator()
    report = experiment.run_experiment(
        fixtures.tiny_config(eval_every=2, epochs=1), spectator=spectator
    )
    self.assertEqual(report.models['snn'].increments, [1, 3, 4])
    self.assertEqual(spectator.increments, [1, 3, 4])
    # Skipped increments reach neither hook.
    self.assertEqual(
        spectator.calls,
        [
            ('before', 1),
            ('after', 1),
            ('before', 3),
            ('after', 3),
            ('before', 4),
            ('after', 4),
        ],
    )
    self.assertLen(spectator.history['ann/full_test_acc'], 3)
    self.assertEqual(
        spectator.history['snn/forgotten_acc'],
        report.models['snn'].forgotten_acc,
    )
    self.assertLen(report.timings['train'], 5)
    self.assertLen(report.timings['ann_eval'], 3)

  @parameterized.parameters(True, False)
  def test_rate_mode_without_filter_reproduces_ann(self, parallel):
    report = experiment.run_experiment(
        fixtures.tiny_config(
            mode='rate', synapse_tau=0.0, parallel=parallel, epochs=1
        )
    )
    ann = report.models[experiment.ANN_TAG]
    snn = report.models[experiment.SNN_TAG]
    for ann_probs, snn_probs in zip(ann.probabilities, snn.probabilities):
      np.testing.assert_array_equal(snn_probs, ann_probs)
    (comparison,) = report.comparisons
    for name in experiment.COMPARED_FIELDS:
      for k, delta in enumerate(comparison.deltas[name]):
        if getattr(ann, name)[k] is None:
          self.assertIsNone(delta, name)
        else:
          self.assertEqual(delta, 0.0, name)
    self.assertIsNone(comparison.deltas['forgotten_acc'][0])
    self.assertTrue(comparison.reproduced)

  def test_class_order(self):
    order = [9, 8, 7, 6, 5, 4, 3, 2, 1, 0]
    cfg = fixtures.tiny_config(class_order=order, group_size=5, epochs=1)
    report = experiment.run_experiment(cfg)
    self.assertEqual(report.groups, ((9, 8, 7, 6, 5), (4, 3, 2, 1, 0)))

  def test_checkpoints(self):
    checkpoint_dir = self.create_tempdir().full_path
    paths = experiment.train_schedule(
        fixtures.tiny_config(group_size=5, epochs=1), checkpoint_dir
    )
    self.assertEqual(
        [os.path.basename(p) for p in paths],
        ['increment_0.npz', 'increment_1.npz'],
    )
    for path in paths:
      self.assertTrue(os.path.exists(path))

  def test_partial_report_on_failure(self):
    output_dir = self.create_tempdir().full_path
    with mock.patch.object(
        simulator, 'batch_simulate', side_effect=RuntimeError('boom')
    ):
      with self.assertRaisesRegex(RuntimeError, 'boom'):
        experiment.run_experiment(
            fixtures.tiny_config(epochs=1), output_dir=output_dir
        )
    path = os.path.join(output_dir, experiment.PARTIAL_REPORT_FILENAME)
    with open(path) as f:
      data = json.load(f)
    self.assertFalse(data['complete'])
    self.assertEqual(data['models']['ann']['increments'], [])
    self.assertEqual(data['comparisons'], [])


class RunExperimentConversionVariantsTest(absltest.TestCase):
  """Extra conversions of the same weights and fixed-image snapshots."""

  @classmethod
  def setUpClass(cls):
    super().setUpClass()
    cls.cfg = fixtures.tiny_config(
        snn_variants=[
            {'name': 'rate', 'mode': 'rate', 'synapse_tau': 0.0},
            {'name': 's50', 'firing_rate_scale': 50.0},
        ],
        snapshot_image=3,
        epochs=1,
    )
    cls.report = experiment.run_experiment(cls.cfg)

  def test_every_variant_is_a_model(self):
    self.assertEqual(list(self.report.models), ['ann', 'snn', 'rate', 's50'])
    self.assertEqual(
        [c.candidate for c in self.report.comparisons], ['snn', 'rate', 's50']
    )
    for comparison in self.report.comparisons:
      self.assertEqual(comparison.baseline, experiment.ANN_TAG)
    for model_eval in self.report.models.values():
      self.assertEqual(model_eval.increments, [0, 1, 2, 3, 4])

  def test_rate_variant_reproduces_ann(self):
    (comparison,) = [
        c for c in self.report.comparisons if c.candidate == 'rate'
    ]
    for name in experiment.COMPARED_FIELDS:
      for delta in comparison.deltas[name]:
        if delta is not None:
          self.assertEqual(delta, 0.0, name)

  def test_variant_keeps_main_settings(self):
    s50 = self.cfg.snn_variants[1].resolve(self.cfg.conversion)
    self.assertEqual(s50.firing_rate_scale, 50.0)
    self.assertEqual(s50.mode, self.cfg.conversion.mode)
    self.assertEqual(s50.synapse_tau, self.cfg.conversion.synapse_tau)

  def test_timings(self):
    self.assertCountEqual(
        self.report.timings,
        [
            'train',
            'ann_eval',
            'snn_convert',
            'snn_eval',
            'rate_convert',
            'rate_eval',
            's50_convert',
            's50_eval',
        ],
    )
    for values in self.report.timings.values():
      self.assertLen(values, 5)

  def test_snapshots(self):
    _, test = experiment.load_experiment_data(self.cfg.dataset, self.cfg.seed)
    self.assertEqual(
        [s.increment for s in self.report.snapshots], [0, 1, 2, 3, 4]
    )
    for snapshot in self.report.snapshots:
      self.assertEqual(snapshot.image_index, 3)
      self.assertEqual(snapshot.label, int(test.labels[3]))
      self.assertIsNotNone(snapshot.trace)
      np.testing.assert_array_equal(snapshot.image, test.images[3])
      self.assertAlmostEqual(float(np.sum(snapshot.probabilities)), 1.0)
      self.assertEqual(
          snapshot.predicted_class, int(np.argmax(snapshot.probabilities))
      )

  def test_report_dict_round_trip(self):
    text = experiment.report_json(self.report)
    data = json.loads(text)
    self.assertEqual(data['format_version'], experiment.REPORT_FORMAT_VERSION)
    self.assertLen(data['snapshots'], 5)
    restored = experiment.EvalReport.from_dict(data)
    self.assertEqual(experiment.report_json(restored), text)
    self.assertIsNone(restored.snapshots[0].trace)

  def test_snapshot_image_out_of_range(self):
    with self.assertRaises(errors.ConfigError):
      experiment.run_experiment(
          fixtures.tiny_config(snapshot_image=50, epochs=1)
      )


if __name__ == '__main__':
  absltest.main()
