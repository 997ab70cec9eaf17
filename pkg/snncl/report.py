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

"""Result tables and files written from an EvalReport.

See docs/output_formats.md for the column definitions. Table values are
rounded to 4 decimal places; undefined entries (statistics about forgotten
classes at the first increment) are written as `nan`.
"""

from __future__ import annotations

import json
import os

import numpy as np
import pandas as pd
from snncl import errors
from snncl import experiment

CSV_COLUMNS = (
    'model',
    'increment',
    'current_acc',
    'cumulative_seen_acc',
    'full_test_acc',
    'retention_mean',
    'retention_rank1_frac',
)
COMPARISON_COLUMNS = ('candidate', 'baseline', 'increment') + tuple(
    f'delta_{name}' for name in experiment.COMPARED_FIELDS
)
DUMP_COLUMNS = (
    ('example_id', 'true_label')
    + tuple(f'p{c}' for c in range(10))
    + ('model', 'increment')
)

REPORT_FILENAME = 'report.json'
COMPARISON_FILENAME = 'comparison.csv'
PROBABILITY_DUMP_FILENAME = 'probabilities.csv'
TIMINGS_FILENAME = 'timings.json'
FLOAT_FORMAT = '%.4f'


def table_filename(tag: str) -> str:
  return f'results_{tag}.csv'


def _float_or_nan(values) -> np.ndarray:
  return np.asarray(
      [np.nan if v is None else v for v in values], dtype=np.float64
  )


def results_frame(model_eval: experiment.ModelEval) -> pd.DataFrame:
  """One row per evaluated increment, columns as in CSV_COLUMNS."""
  return pd.DataFrame(
      {
          'model': [model_eval.tag] * len(model_eval.increments),
          'increment': np.asarray(model_eval.increments, dtype=np.int64),
          'current_acc': _float_or_nan(model_eval.current_acc),
          'cumulative_seen_acc': _float_or_nan(
              model_eval.cumulative_seen_acc
          ),
          'full_test_acc': _float_or_nan(model_eval.full_test_acc),
          'retention_mean': _float_or_nan(model_eval.retention_mean),
          'retention_rank1_frac': _float_or_nan(model_eval.rank1_frac),
      },
      columns=list(CSV_COLUMNS),
  )


def comparison_frame(report: experiment.EvalReport) -> pd.DataFrame:
  rows = []
  for comparison in report.comparisons:
    for k, increment in enumerate(comparison.increments):
      row = {
          'candidate': comparison.candidate,
          'baseline': comparison.baseline,
          'increment': increment,
      }
      for name in experiment.COMPARED_FIELDS:
        value = comparison.deltas[name][k]
        row[f'delta_{name}'] = np.nan if value is None else value
      rows.append(row)
  return pd.DataFrame(rows, columns=list(COMPARISON_COLUMNS))


def _prepare_dir(out_dir: str | os.PathLike) -> str:
  out_dir = os.fspath(out_dir)
  try:
    os.makedirs(out_dir, exist_ok=True)
  except OSError as e:
    raise errors.ValidationError(
        f'Cannot create output directory {out_dir}: {e}'
    ) from e
  if not os.access(out_dir, os.W_OK):
    raise errors.ValidationError(f'Output directory {out_dir} is not writable.')
  return out_dir


def write_report_json(
    report: experiment.EvalReport, path: str | os.PathLike
) -> str:
  path = os.fspath(path)
  with open(path, 'w') as f:
    f.write(experiment.report_json(report))
  return path


def load_report(path: str | os.PathLike) -> experiment.EvalReport:
  """Reads a report written by `write_report_json`.

  Raises:
    ValidationError: if the file is not a report.
  """
  with open(path, 'r') as f:
    try:
      data = json.load(f)
    except json.JSONDecodeError as e:
      raise errors.ValidationError(f'{path} is not valid JSON: {e}') from e
  try:
    return experiment.EvalReport.from_dict(data)
  except (KeyError, TypeError) as e:
    raise errors.ValidationError(f'{path} is not an EvalReport: {e}') from e


def emit_tables(
    report: experiment.EvalReport, out_dir: str | os.PathLike
) -> list[str]:
  """Writes one results CSV per model, the comparison CSV and report.json.

  Args:
    report: A complete report.
    out_dir: Output directory, created if missing.

  Returns:
    Paths of the written files.

  Raises:
    ValidationError: if the report is partial or the directory cannot be
      written.
  """
  if not report.complete:
    raise errors.ValidationError('Cannot emit tables for a partial report.')
  out_dir = _prepare_dir(out_dir)
  written = []
  for tag, model_eval in report.models.items():
    path = os.path.join(out_dir, table_filename(tag))
    results_frame(model_eval).to_csv(
        path, index=False, float_format=FLOAT_FORMAT, na_rep='nan'
    )
    written.append(path)
  path = os.path.join(out_dir, COMPARISON_FILENAME)
  comparison_frame(report).to_csv(
      path, index=False, float_format=FLOAT_FORMAT, na_rep='nan'
  )
  written.append(path)
  written.append(
      write_report_json(report, os.path.join(out_dir, REPORT_FILENAME))
  )
  return written


def read_results_table(path: str | os.PathLike) -> pd.DataFrame:
  """Reads a results CSV, checking its header.

  Raises:
    ValidationError: if the columns differ from CSV_COLUMNS.
  """
  frame = pd.read_csv(path)
  if tuple(frame.columns) != CSV_COLUMNS:
    raise errors.ValidationError(
        f'{path} has columns {list(frame.columns)}, expected'
        f' {list(CSV_COLUMNS)}.'
    )
  return frame


def write_probability_dump(
    report: experiment.EvalReport, path: str | os.PathLike
) -> str:
  """Per-example probabilities of every model and evaluated increment.

  Probabilities are written at full precision so any statistic of the report
  can be recomputed from the dump.

  Raises:
    ValidationError: if the report carries no per-example probabilities,
      e.g. one loaded back from JSON.
  """
  if report.test_labels is None:
    raise errors.ValidationError('Report has no per-example labels.')
  labels = np.asarray(report.test_labels)
  frames = []
  for tag, model_eval in report.models.items():
    if len(model_eval.probabilities) != len(model_eval.increments):
      raise errors.ValidationError(
          f'Report has no per-example probabilities for model {tag!r}.'
      )
    for increment, probabilities in zip(
        model_eval.increments, model_eval.probabilities
    ):
      frame = pd.DataFrame(
          np.asarray(probabilities, dtype=np.float64),
          columns=[f'p{c}' for c in range(probabilities.shape[-1])],
      )
      frame.insert(0, 'example_id', np.arange(labels.shape[0]))
      frame.insert(1, 'true_label', labels.astype(np.int64))
      frame['model'] = tag
      frame['increment'] = increment
      frames.append(frame)
  if not frames:
    raise errors.ValidationError('Report has no evaluated increments.')
  path = os.fspath(path)
  pd.concat(frames, ignore_index=True).to_csv(
      path, index=False, columns=list(DUMP_COLUMNS), float_format='%.17g'
  )
  return path


def write_timings(
    report: experiment.EvalReport, path: str | os.PathLike
) -> str:
  """Wall-clock seconds per phase and increment."""
  path = os.fspath(path)
  with open(path, 'w') as f:
    json.dump(report.timings, f, indent=2, sort_keys=True)
  return path
