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

"""A module providing a runnable main for forgetting experiments.

You can use the `main()` function in this module as an entry point for your
experiment (see the example below). It runs the experiment and writes the
result bundle (tables, JSON report, per-example probabilities, curves) to an
output directory.

See run_experiment_main.py for a ready-made command-line entrypoint.

.. code-block:: python

  # In my_experiment.py:

  from snncl import experiment_app
  from snncl.config import runtime_params

  if __name__ == '__main__':
    cfg = runtime_params.ExperimentConfig(seed=7)
    experiment_app.main(cfg, output_dir='/tmp/my_run')
"""

from __future__ import annotations

import datetime
import enum
import os
import sys

from absl import logging
from snncl import experiment
from snncl import report as report_lib
from snncl.config import runtime_params
from snncl.plotting import svg_plots
from snncl.snn import simulator
from snncl.spectators import spectator as spectator_lib

# String printed before printing an output file path.
WRITE_PREFIX = 'Wrote experiment output to '

CURVES_FILENAME = 'accuracy_curves.svg'


def snapshot_filename(increment: int, suffix: str) -> str:
  return f'snapshot_increment_{increment}{suffix}'


# For logging.
# ANSI color codes for pretty-printing
@enum.unique
class AnsiColors(enum.Enum):
  BLUE = '\033[94m'
  GREEN = '\033[92m'
  YELLOW = '\033[93m'
  RED = '\033[91m'


_ANSI_END = '\033[0m'

_DEFAULT_OUTPUT_DIR_PREFIX = '/tmp/snncl_results_'


def log_to_stdout(
    output: str,
    color: AnsiColors | None = None,
    exc_info: bool = False,
) -> None:
  if not color or not sys.stderr.isatty():
    logging.info(output, exc_info=exc_info)
  else:
    logging.info('%s%s%s', color.value, output, _ANSI_END, exc_info=exc_info)


def get_output_dir(output_dir: str | None) -> str:
  if output_dir:
    return output_dir
  return _DEFAULT_OUTPUT_DIR_PREFIX + datetime.datetime.now().strftime(
      '%Y%m%d_%H%M%S'
  )


def write_outputs(
    report: experiment.EvalReport, output_dir: str
) -> list[str]:
  """Writes the full result bundle of a finished experiment.

  The bundle is the per-model results tables, the comparison table, the JSON
  report, the per-example probability dump and the accuracy curves. The
  wall-clock timings go to a separate file because they differ between runs.
  With `snapshot_image` set, every evaluated increment also gets a trace CSV
  and a three-frame figure of that image.

  Returns:
    Paths of the written files.
  """
  written = report_lib.emit_tables(report, output_dir)
  written.append(
      report_lib.write_probability_dump(
          report,
          os.path.join(output_dir, report_lib.PROBABILITY_DUMP_FILENAME),
      )
  )
  written.append(
      svg_plots.emit_accuracy_curves(
          report, os.path.join(output_dir, CURVES_FILENAME)
      )
  )
  written.extend(write_snapshots(report, output_dir))
  written.append(
      report_lib.write_timings(
          report, os.path.join(output_dir, report_lib.TIMINGS_FILENAME)
      )
  )
  for path in written:
    log_to_stdout(f'{WRITE_PREFIX}{path}', AnsiColors.GREEN)
  return written


def write_snapshots(
    report: experiment.EvalReport, output_dir: str
) -> list[str]:
  """Trace CSV and three-frame figure of every in-memory image snapshot."""
  written = []
  for snapshot in report.snapshots:
    if snapshot.trace is None or snapshot.image is None:
      continue
    written.append(
        simulator.write_trace(
            snapshot.trace,
            os.path.join(
                output_dir, snapshot_filename(snapshot.increment, '.csv')
            ),
        )
    )
    written.append(
        svg_plots.emit_three_frame(
            snapshot.image,
            snapshot.trace,
            snapshot.probabilities,
            os.path.join(
                output_dir, snapshot_filename(snapshot.increment, '.svg')
            ),
            title=(
                f'after increment {snapshot.increment}: label'
                f' {snapshot.label}, predicted {snapshot.predicted_class}'
            ),
        )
    )
  return written


def log_report_summary(report: experiment.EvalReport) -> None:
  for tag, model_eval in report.models.items():
    log_to_stdout(f'Model {tag}:', AnsiColors.BLUE)
    for k, increment in enumerate(model_eval.increments):
      logging.info(
          '  increment %d: current %.4f, seen %.4f, full %.4f',
          increment,
          model_eval.current_acc[k],
          model_eval.cumulative_seen_acc[k],
          model_eval.full_test_acc[k],
      )
  for comparison in report.comparisons:
    color = AnsiColors.GREEN if comparison.reproduced else AnsiColors.YELLOW
    log_to_stdout(
        f'{comparison.candidate} retains at least as much of the forgotten'
        f' classes as {comparison.baseline}: {comparison.reproduced}',
        color,
    )


def main(
    cfg: runtime_params.ExperimentConfig,
    *,
    output_dir: str | None = None,
    spectator: spectator_lib.Spectator | None = None,
    checkpoint_dir: str | None = None,
) -> tuple[experiment.EvalReport, str]:
  """Runs an experiment and writes its result bundle.

  Existing files in the output directory are overwritten; nothing else in it
  is removed.

  Args:
    cfg: Experiment configuration.
    output_dir: Output directory. Defaults to `cfg.output_dir`, then to a
      timestamped folder in /tmp.
    spectator: Optional observer passed to the harness.
    checkpoint_dir: If given, the model after every increment is saved there.

  Returns:
    The report and the output directory.
  """
  output_dir = get_output_dir(output_dir or cfg.output_dir)
  os.makedirs(output_dir, exist_ok=True)
  log_to_stdout(
      f'Running experiment, writing to {output_dir}', AnsiColors.BLUE
  )
  report = experiment.run_experiment(
      cfg,
      spectator=spectator,
      output_dir=output_dir,
      checkpoint_dir=checkpoint_dir,
  )
  log_report_summary(report)
  write_outputs(report, output_dir)
  return report, output_dir
