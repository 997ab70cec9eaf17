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

"""SVG figures: spike rasters, accuracy curves and the three-frame figure.

Figures are drawn with the object-oriented matplotlib API (no pyplot global
state) and written with a fixed id salt and no date, so identical inputs give
identical file bytes. Spike markers are grouped under the SVG element with id
`spikes`, one `<use>` element per (step, neuron) event.
"""

from __future__ import annotations

import math
import os

import matplotlib
from matplotlib import figure as figure_lib
import numpy as np
from snncl import errors
from snncl import experiment
from snncl.snn import simulator

MAX_RASTER_NEURONS = 512
SPIKES_GID = 'spikes'

_RC_PARAMS = {
    'svg.hashsalt': 'snncl',
    'svg.fonttype': 'none',
    'path.simplify': False,
}


def _save(fig: figure_lib.Figure, path: str | os.PathLike) -> str:
  path = os.fspath(path)
  directory = os.path.dirname(path)
  if directory:
    os.makedirs(directory, exist_ok=True)
  fig.savefig(path, format='svg', metadata={'Date': None})
  return path


def raster_events(
    trace: simulator.SpikeTrace, max_neurons: int = MAX_RASTER_NEURONS
) -> tuple[np.ndarray, np.ndarray, int]:
  """Spike events of the neurons kept by fixed-stride subsampling.

  Returns:
    (steps, neuron ids, stride). Neuron ids are the original indices; only
    ids divisible by the stride are kept, at most `max_neurons` of them.
  """
  if max_neurons < 1:
    raise errors.ValidationError(
        f'max_neurons must be >= 1, got {max_neurons}.'
    )
  stride = max(1, math.ceil(trace.n_neurons / max_neurons))
  steps, neuron_ids, _ = trace.events()
  keep = neuron_ids % stride == 0
  return steps[keep], neuron_ids[keep], stride


def _draw_raster(ax, trace, max_neurons) -> int:
  steps, neuron_ids, stride = raster_events(trace, max_neurons)
  ax.plot(
      steps,
      neuron_ids,
      linestyle='none',
      marker='|',
      markersize=4,
      color='black',
      gid=SPIKES_GID,
  )
  ax.set_xlim(-0.5, trace.n_steps - 0.5)
  ax.set_ylim(-0.5, max(trace.n_neurons, 1) - 0.5)
  ax.set_xlabel('timestep')
  if stride > 1:
    ax.set_ylabel(f'neuron index (every {stride})')
  else:
    ax.set_ylabel('neuron index')
  return int(steps.shape[0])


def emit_raster(
    trace: simulator.SpikeTrace,
    path: str | os.PathLike,
    max_neurons: int = MAX_RASTER_NEURONS,
    title: str | None = None,
) -> str:
  """Writes a spike raster: x = timestep, y = neuron index, one mark per spike.

  Args:
    trace: Recorded layer activity.
    path: Output SVG path.
    max_neurons: Neurons drawn at most, chosen by fixed stride.
    title: Optional axes title.

  Returns:
    The written path.

  Raises:
    EmptySubsetError: if the trace holds no spike.
  """
  if trace.n_steps == 0 or len(trace) == 0:
    raise errors.EmptySubsetError(
        f'Trace of layer {trace.layer} has no spikes to plot.'
    )
  with matplotlib.rc_context(_RC_PARAMS):
    fig = figure_lib.Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    _draw_raster(ax, trace, max_neurons)
    ax.set_title(title or f'Spikes of layer {trace.layer}')
    fig.tight_layout()
    return _save(fig, path)


def emit_accuracy_curves(
    report: experiment.EvalReport, path: str | os.PathLike
) -> str:
  """Cumulative-seen and full-test accuracy against increment, per model."""
  with matplotlib.rc_context(_RC_PARAMS):
    fig = figure_lib.Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    for tag, model_eval in report.models.items():
      x = np.asarray(model_eval.increments) + 1
      ax.plot(
          x,
          model_eval.cumulative_seen_acc,
          marker='o',
          label=f'{tag} seen classes',
          gid=f'{tag}_cumulative_seen_acc',
      )
      ax.plot(
          x,
          model_eval.full_test_acc,
          marker='s',
          linestyle='--',
          label=f'{tag} full test set',
          gid=f'{tag}_full_test_acc',
      )
    ax.set_xticks(range(1, len(report.groups) + 1))
    ax.set_ylim(0.0, 1.05)
    ax.set_xlabel('increment')
    ax.set_ylabel('accuracy')
    ax.set_title(f'Accuracy per increment ({report.dataset})')
    ax.legend(loc='lower left')
    fig.tight_layout()
    return _save(fig, path)


def emit_three_frame(
    image: np.ndarray,
    trace: simulator.SpikeTrace,
    probabilities: np.ndarray,
    path: str | os.PathLike,
    title: str | None = None,
    max_neurons: int = MAX_RASTER_NEURONS,
) -> str:
  """Input image, spike raster and output probabilities side by side.

  Args:
    image: (28, 28) or (1, 28, 28) input in [0, 1].
    trace: Activity of the recorded layer for this input.
    probabilities: (10,) readout probabilities.
    path: Output SVG path.
    title: Optional figure title.
    max_neurons: Neurons drawn at most in the raster.

  Returns:
    The written path.
  """
  image = np.asarray(image)
  image = image.reshape(image.shape[-2:])
  probabilities = np.asarray(probabilities)
  with matplotlib.rc_context(_RC_PARAMS):
    fig = figure_lib.Figure(figsize=(12, 4))
    ax_image, ax_raster, ax_probs = fig.subplots(1, 3)

    ax_image.imshow(image, cmap='gray', vmin=0.0, vmax=1.0)
    ax_image.set_xticks([])
    ax_image.set_yticks([])
    ax_image.set_title('input')

    n_spikes = _draw_raster(ax_raster, trace, max_neurons)
    ax_raster.set_title(f'layer {trace.layer}: {n_spikes} spikes shown')

    classes = np.arange(probabilities.shape[-1])
    ax_probs.bar(classes, probabilities, color='gray', gid='probabilities')
    ax_probs.set_xticks(classes)
    ax_probs.set_ylim(0.0, 1.0)
    ax_probs.set_xlabel('class')
    ax_probs.set_ylabel('probability')
    ax_probs.set_title(f'prediction: {int(np.argmax(probabilities))}')

    if title:
      fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)
