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

"""Unit tests for the run_experiment_main script.

Our other test files don't have the "test_" prefix in their name and just
match the name of the module they test. This one can't be named
"run_experiment_main" or `import run_experiment_main` would pick up this file
rather than the script in the repo root.
"""

import io
import json
import os
import sys

from absl import logging
from absl.testing import absltest
from absl.testing import parameterized
import snncl
from snncl import experiment_app
from snncl.tests.test_lib import fixtures
from snncl.tests.test_lib import paths

# run_experiment_main.py is in the repo root, the parent of the package.
(snncl_path,) = snncl.__path__
snncl_repo_path = os.path.abspath(os.path.join(snncl_path, os.pardir))
sys.path.append(snncl_repo_path)
try:
  import run_experiment_main  # pylint: disable=g-import-not-at-top
finally:
  del sys.path[-1]

_TINY_RUN_FLAGS = (
    '--dataset=synthetic',
    '--synthetic_train_per_class=10',
    '--synthetic_test_per_class=3',
    '--architecture=small',
    '--epochs=1',
    '--batch_size=20',
    '--n_steps=10',
    '--readout_window=5',
    '--chunk_size=30',
)

_DETERMINISTIC_OUTPUTS = (
    'results_ann.csv',
    'results_snn.csv',
    'comparison.csv',
    'report.json',
    'probabilities.csv',
    experiment_app.CURVES_FILENAME,
)


def _read_bytes(path):
  with open(path, 'rb') as f:
    return f.read()


class RunExperimentMainTest(parameterized.TestCase):
  """Unit tests for the `run_experiment_main` app."""

  def _run(self, *args):
    """Runs the app on `args`, returns (exit code, captured log)."""
    captured = io.StringIO()
    handler = logging.PythonHandler(captured)
    logging.set_verbosity(logging.INFO)
    logging.get_absl_logger().addHandler(handler)
    try:
      code = run_experiment_main.cli_main(['run_experiment_main.py', *args])
    finally:
      logging.get_absl_logger().removeHandler(handler)
    return code, captured.getvalue()

  @parameterized.named_parameters(
      dict(testcase_name='no_command', args=()),
      dict(testcase_name='unknown_command', args=('fly',)),
      dict(testcase_name='two_commands', args=('run', 'report')),
      dict(testcase_name='unknown_flag', args=('run', '--warp_speed=9')),
      dict(testcase_name='bad_enum_flag', args=('run', '--mode=analog')),
      dict(
          testcase_name='invalid_config_value',
          args=('run', '--dataset=synthetic', '--epochs=-1'),
      ),
      dict(testcase_name='missing_checkpoint_flag', args=('convert',)),
      dict(testcase_name='missing_report_flag', args=('report',)),
  )
  def test_invalid_invocations(self, args):
    code, _ = self._run(*args)
    self.assertEqual(code, run_experiment_main.EXIT_INVALID)

  def test_runtime_failure(self):
    out_dir = self.create_tempdir().full_path
    code, _ = self._run(
        'convert',
        '--checkpoint=' + os.path.join(out_dir, 'missing.npz'),
        '--output_dir=' + out_dir,
    )
    self.assertEqual(code, run_experiment_main.EXIT_FAILURE)

  def test_config_file_and_flag_precedence(self):
    config_path = self.create_tempfile(
        'cfg.yaml', content='epochs: 3\nseed: 5\ndataset.source: synthetic\n'
    ).full_path
    code = run_experiment_main.cli_main(
        ['run_experiment_main.py', '--config=' + config_path, '--epochs=7']
    )
    # No command, but the flags parsed.
    self.assertEqual(code, run_experiment_main.EXIT_INVALID)
    cfg = run_experiment_main.build_config()
    self.assertEqual(cfg.training.epochs, 7)
    self.assertEqual(cfg.seed, 5)
    self.assertEqual(cfg.dataset.source.value, 'synthetic')

  def test_flags_do_not_leak_between_calls(self):
    run_experiment_main.cli_main(['run_experiment_main.py', '--epochs=7'])
    run_experiment_main.cli_main(['run_experiment_main.py'])
    self.assertEqual(run_experiment_main.build_config().training.epochs, 10)

  def test_report(self):
    out_dir = self.create_tempdir().full_path
    code, log = self._run(
        'report',
        '--report=' + paths.test_data_file('sample_report.json'),
        '--output_dir=' + out_dir,
    )
    self.assertEqual(code, run_experiment_main.EXIT_OK)
    for name in (
        'results_ann.csv',
        'results_snn.csv',
        'comparison.csv',
        'report.json',
        experiment_app.CURVES_FILENAME,
    ):
      self.assertTrue(os.path.exists(os.path.join(out_dir, name)), name)
    self.assertIn(experiment_app.WRITE_PREFIX, log)

  def test_ingest(self):
    data_dir = fixtures.write_fake_dataset(self)
    code, log = self._run('ingest', '--data_dir=' + data_dir)
    self.assertEqual(code, run_experiment_main.EXIT_OK)
    self.assertIn('mnist train: 30 examples of 28x28', log)
    self.assertIn('mnist test: 20 examples of 28x28', log)

  def test_ingest_missing_files(self):
    code, _ = self._run(
        'ingest', '--data_dir=' + self.create_tempdir().full_path
    )
    self.assertEqual(code, run_experiment_main.EXIT_FAILURE)

  def test_run_is_deterministic_and_feeds_simulate(self):
    first = self.create_tempdir().full_path
    second = self.create_tempdir().full_path
    code, _ = self._run(
        'run', *_TINY_RUN_FLAGS, '--save_checkpoints', '--output_dir=' + first
    )
    self.assertEqual(code, run_experiment_main.EXIT_OK)
    code, _ = self._run('run', *_TINY_RUN_FLAGS, '--output_dir=' + second)
    self.assertEqual(code, run_experiment_main.EXIT_OK)
    for name in _DETERMINISTIC_OUTPUTS:
      self.assertEqual(
          _read_bytes(os.path.join(first, name)),
          _read_bytes(os.path.join(second, name)),
          name,
      )
    self.assertTrue(os.path.exists(os.path.join(first, 'timings.json')))
    self.assertFalse(
        os.path.exists(
            os.path.join(second, run_experiment_main.CHECKPOINT_SUBDIR)
        )
    )

    checkpoint_path = os.path.join(
        first, run_experiment_main.CHECKPOINT_SUBDIR, 'increment_4.npz'
    )
    sim_dir = self.create_tempdir().full_path
    code, log = self._run(
        'simulate',
        *_TINY_RUN_FLAGS,
        '--firing_rate_scale=200',
        '--checkpoint=' + checkpoint_path,
        '--image_index=3',
        '--output_dir=' + sim_dir,
    )
    self.assertEqual(code, run_experiment_main.EXIT_OK)
    self.assertIn('Image 3 (label 3)', log)
    for name in (
        run_experiment_main.TRACE_FILENAME,
        run_experiment_main.THREE_FRAME_FILENAME,
    ):
      self.assertTrue(os.path.exists(os.path.join(sim_dir, name)), name)

    network_path = os.path.join(sim_dir, 'net', 'network.npz')
    code, _ = self._run(
        'convert',
        '--mode=rate',
        '--checkpoint=' + checkpoint_path,
        '--network=' + network_path,
    )
    self.assertEqual(code, run_experiment_main.EXIT_OK)
    code, _ = self._run(
        'simulate',
        *_TINY_RUN_FLAGS,
        '--network=' + network_path,
        '--image_index=1000',
        '--output_dir=' + sim_dir,
    )
    self.assertEqual(code, run_experiment_main.EXIT_INVALID)

  def test_run_with_snapshot_image(self):
    out_dir = self.create_tempdir().full_path
    code, _ = self._run(
        'run',
        *_TINY_RUN_FLAGS,
        '--group_size=5',
        '--snapshot_image=2',
        '--output_dir=' + out_dir,
    )
    self.assertEqual(code, run_experiment_main.EXIT_OK)
    for increment in (0, 1):
      for suffix in ('.csv', '.svg'):
        name = experiment_app.snapshot_filename(increment, suffix)
        self.assertTrue(os.path.exists(os.path.join(out_dir, name)), name)
    with open(os.path.join(out_dir, 'report.json')) as f:
      snapshots = json.load(f)['snapshots']
    self.assertEqual([s['increment'] for s in snapshots], [0, 1])
    self.assertEqual({s['image_index'] for s in snapshots}, {2})

  def test_train(self):
    out_dir = self.create_tempdir().full_path
    code, _ = self._run(
        'train', *_TINY_RUN_FLAGS, '--group_size=5', '--output_dir=' + out_dir
    )
    self.assertEqual(code, run_experiment_main.EXIT_OK)
    self.assertCountEqual(
        os.listdir(
            os.path.join(out_dir, run_experiment_main.CHECKPOINT_SUBDIR)
        ),
        ['increment_0.npz', 'increment_1.npz'],
    )


if __name__ == '__main__':
  absltest.main()
