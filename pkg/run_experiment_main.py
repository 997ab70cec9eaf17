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

r"""Main entrypoint for forgetting experiments.

Usage: run_experiment_main.py <command> [--flags]

Commands:
  ingest    locate and validate the dataset files, print label histograms
  train     train every increment, write one checkpoint per increment
  convert   turn a checkpoint into a spiking network file
  simulate  present one test image, write its spike trace and figure
  run       run the full experiment and write the result bundle
  report    rebuild tables and curves from a report.json

Example command:
python3 run_experiment_main.py run \
 --config=configs/mnist.yaml \
 --seed=7 \
 --output_dir=/tmp/mnist_seed7

Exit codes: 0 on success, 1 for invalid flags, configs or inputs, 2 for any
other failure.
"""

from collections.abc import Sequence
import os
import sys
import time
from typing import Any

from absl import app
from absl import flags
from absl import logging
import jax
from snncl import experiment
from snncl import experiment_app
from snncl import report as report_lib
from snncl.ann import checkpoint
from snncl.config import config_args
from snncl.config import runtime_params
from snncl.data import dataset as dataset_lib
from snncl.plotting import svg_plots
from snncl.snn import convert as convert_lib
from snncl.snn import simulator

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILURE = 2

COMMANDS = ('ingest', 'train', 'convert', 'simulate', 'run', 'report')

NETWORK_FILENAME = 'network.npz'
TRACE_FILENAME = 'trace.csv'
THREE_FRAME_FILENAME = 'three_frame.svg'
RASTER_FILENAME = 'raster.svg'
CHECKPOINT_SUBDIR = 'checkpoints'

_CONFIG_FILE = flags.DEFINE_string(
    'config',
    None,
    'Path to a flat YAML config file. Keys are ExperimentConfig fields, dotted'
    ' (training.epochs) or bare when unambiguous (epochs). Flags override'
    ' values from the file.',
)

# Flags that override a config entry. Each maps to a dotted config key.
_DATASET = flags.DEFINE_enum(
    'dataset',
    None,
    [s.value for s in dataset_lib.DatasetSource],
    'Dataset to use.',
)
_DATA_DIR = flags.DEFINE_string(
    'data_dir',
    None,
    'Directory holding the IDX files. Defaults to'
    ' $SNNCL_DATA_DIR, then ./data.',
)
_GROUP_SIZE = flags.DEFINE_integer(
    'group_size', None, 'Classes per increment.'
)
_CLASS_ORDER = flags.DEFINE_list(
    'class_order', None, 'Comma-separated permutation of 0..9.'
)
_SYNTHETIC_TRAIN_PER_CLASS = flags.DEFINE_integer(
    'synthetic_train_per_class',
    None,
    'Synthetic dataset: training examples per class.',
)
_SYNTHETIC_TEST_PER_CLASS = flags.DEFINE_integer(
    'synthetic_test_per_class',
    None,
    'Synthetic dataset: test examples per class.',
)
_ARCHITECTURE = flags.DEFINE_string(
    'architecture', None, 'Classifier architecture name.'
)
_EPOCHS = flags.DEFINE_integer('epochs', None, 'Epochs per increment.')
_BATCH_SIZE = flags.DEFINE_integer('batch_size', None, 'Minibatch size.')
_LEARNING_RATE = flags.DEFINE_float(
    'learning_rate', None, 'Adam learning rate.'
)
_L2 = flags.DEFINE_float('l2', None, 'Weight decay on weights.')
_MODE = flags.DEFINE_enum(
    'mode',
    None,
    [m.value for m in runtime_params.NeuronMode],
    'Neuron mode of the converted network.',
)
_FIRING_RATE_SCALE = flags.DEFINE_float(
    'firing_rate_scale', None, 'Firing-rate scale s.'
)
_SYNAPSE_TAU = flags.DEFINE_float(
    'synapse_tau', None, 'Synapse time constant in seconds.'
)
_DT = flags.DEFINE_float('dt', None, 'Simulation timestep in seconds.')
_MAX_SPIKES_PER_STEP = flags.DEFINE_integer(
    'max_spikes_per_step', None, 'Spikes a neuron may emit per step.'
)
_N_STEPS = flags.DEFINE_integer('n_steps', None, 'Steps per presentation.')
_READOUT_WINDOW = flags.DEFINE_integer(
    'readout_window', None, 'Trailing steps averaged for the readout.'
)
_TRACE_LAYER = flags.DEFINE_integer(
    'trace_layer', None, 'Neuron layer recorded by `simulate`.'
)
_PARALLEL = flags.DEFINE_bool(
    'parallel', None, 'Simulate chunks of images at once.'
)
_CHUNK_SIZE = flags.DEFINE_integer(
    'chunk_size', None, 'Images per simulated chunk.'
)
_SEED = flags.DEFINE_integer('seed', None, 'Experiment seed.')
_EVAL_EVERY = flags.DEFINE_integer(
    'eval_every', None, 'Evaluate every k-th increment.'
)
_SNAPSHOT_IMAGE = flags.DEFINE_integer(
    'snapshot_image',
    None,
    'run: test image re-simulated with traces after every evaluated'
    ' increment.',
)
_OUTPUT_DIR = flags.DEFINE_string(
    'output_dir',
    None,
    'Output directory. Defaults to /tmp/snncl_results_<timestamp>.',
)

# Command-specific flags.
_CHECKPOINT = flags.DEFINE_string(
    'checkpoint', None, 'convert/simulate: path of a trained model checkpoint.'
)
_NETWORK = flags.DEFINE_string(
    'network',
    None,
    'convert: output path (default <output_dir>/network.npz). simulate: a'
    ' network file to use instead of converting --checkpoint.',
)
_IMAGE_INDEX = flags.DEFINE_integer(
    'image_index', 0, 'simulate: index of the presented test image.'
)
_REPORT = flags.DEFINE_string(
    'report', None, 'report: path of a report.json.'
)
_SAVE_CHECKPOINTS = flags.DEFINE_bool(
    'save_checkpoints',
    False,
    'run: also save the model after every increment.',
)

_OVERRIDES = {
    'dataset.source': _DATASET,
    'dataset.data_dir': _DATA_DIR,
    'dataset.group_size': _GROUP_SIZE,
    'dataset.class_order': _CLASS_ORDER,
    'dataset.synthetic_train_per_class': _SYNTHETIC_TRAIN_PER_CLASS,
    'dataset.synthetic_test_per_class': _SYNTHETIC_TEST_PER_CLASS,
    'training.architecture': _ARCHITECTURE,
    'training.epochs': _EPOCHS,
    'training.batch_size': _BATCH_SIZE,
    'training.learning_rate': _LEARNING_RATE,
    'training.l2': _L2,
    'conversion.mode': _MODE,
    'conversion.firing_rate_scale': _FIRING_RATE_SCALE,
    'conversion.synapse_tau': _SYNAPSE_TAU,
    'conversion.dt': _DT,
    'conversion.max_spikes_per_step': _MAX_SPIKES_PER_STEP,
    'simulation.n_steps': _N_STEPS,
    'simulation.readout_window': _READOUT_WINDOW,
    'simulation.trace_layer': _TRACE_LAYER,
    'simulation.parallel': _PARALLEL,
    'simulation.chunk_size': _CHUNK_SIZE,
    'seed': _SEED,
    'eval_every': _EVAL_EVERY,
    'snapshot_image': _SNAPSHOT_IMAGE,
    'output_dir': _OUTPUT_DIR,
}

_COMMAND_FLAGS = (
    _CONFIG_FILE,
    _CHECKPOINT,
    _NETWORK,
    _IMAGE_INDEX,
    _REPORT,
    _SAVE_CHECKPOINTS,
)

jax.config.parse_flags_with_absl()


def _usage() -> str:
  return __doc__.split('Example command:')[0].strip() + '\n'


def build_config() -> runtime_params.ExperimentConfig:
  """Defaults, then the --config file, then explicitly set flags."""
  file_values = {}
  if _CONFIG_FILE.value:
    file_values = config_args.load_config_file(_CONFIG_FILE.value)
  overrides: dict[str, Any] = {
      key: holder.value for key, holder in _OVERRIDES.items()
  }
  if overrides['dataset.class_order'] is not None:
    overrides['dataset.class_order'] = [
        int(c) for c in overrides['dataset.class_order']
    ]
  return config_args.build_config(file_values, overrides)


def _output_dir(cfg: runtime_params.ExperimentConfig) -> str:
  output_dir = experiment_app.get_output_dir(cfg.output_dir)
  os.makedirs(output_dir, exist_ok=True)
  return output_dir


def _require(holder: flags.FlagHolder, command: str) -> Any:
  if holder.value is None:
    raise ValueError(f'`{command}` requires --{holder.name}.')
  return holder.value


def ingest(cfg: runtime_params.ExperimentConfig) -> None:
  """Loads both splits and logs their sizes and label histograms."""
  train, test = experiment.load_experiment_data(cfg.dataset, cfg.seed)
  for ds in (train, test):
    histogram = dataset_lib.label_histogram(ds)
    experiment_app.log_to_stdout(
        f'{ds.source.value} {ds.split.value}: {len(ds)} examples of'
        f' {ds.images.shape[1]}x{ds.images.shape[2]}',
        experiment_app.AnsiColors.GREEN,
    )
    experiment_app.log_to_stdout(
        '  labels: '
        + ', '.join(f'{c}: {int(n)}' for c, n in enumerate(histogram))
    )
  schedule = experiment.build_schedule(cfg.dataset, train)
  experiment_app.log_to_stdout(
      f'Increments: {[list(g) for g in schedule.groups]}'
  )


def train(cfg: runtime_params.ExperimentConfig) -> None:
  checkpoint_dir = os.path.join(_output_dir(cfg), CHECKPOINT_SUBDIR)
  for path in experiment.train_schedule(cfg, checkpoint_dir):
    experiment_app.log_to_stdout(
        f'{experiment_app.WRITE_PREFIX}{path}', experiment_app.AnsiColors.GREEN
    )


def convert(cfg: runtime_params.ExperimentConfig) -> None:
  model = checkpoint.load_checkpoint(_require(_CHECKPOINT, 'convert'))
  net = experiment.convert_model(model, cfg.conversion)
  path = _NETWORK.value or os.path.join(_output_dir(cfg), NETWORK_FILENAME)
  path = convert_lib.save_network(net, path)
  experiment_app.log_to_stdout(
      f'{experiment_app.WRITE_PREFIX}{path}', experiment_app.AnsiColors.GREEN
  )


def simulate(cfg: runtime_params.ExperimentConfig) -> None:
  """Presents one test image and writes its trace, raster and figure."""
  if _NETWORK.value:
    net = convert_lib.load_network(_NETWORK.value)
  else:
    model = checkpoint.load_checkpoint(_require(_CHECKPOINT, 'simulate'))
    net = experiment.convert_model(model, cfg.conversion)
  _, test = experiment.load_experiment_data(cfg.dataset, cfg.seed)
  index = _IMAGE_INDEX.value
  if not 0 <= index < len(test):
    raise ValueError(
        f'--image_index must lie in 0..{len(test) - 1}, got {index}.'
    )
  sim_cfg = config_args.recursive_replace(cfg.simulation, record_traces=True)
  result = simulator.simulate(
      convert_lib.reset(net), test.images[index], sim_cfg
  )
  label = int(test.labels[index])
  experiment_app.log_to_stdout(
      f'Image {index} (label {label}): predicted {result.predicted_class},'
      f' p[label] = {result.probabilities[label]:.4f},'
      f' {result.spike_count} spikes.',
      experiment_app.AnsiColors.GREEN,
  )
  output_dir = _output_dir(cfg)
  written = [
      simulator.write_trace(
          result.trace, os.path.join(output_dir, TRACE_FILENAME)
      ),
      svg_plots.emit_three_frame(
          test.images[index],
          result.trace,
          result.probabilities,
          os.path.join(output_dir, THREE_FRAME_FILENAME),
          title=f'label {label}, predicted {result.predicted_class}',
      ),
  ]
  if len(result.trace):
    written.append(
        svg_plots.emit_raster(
            result.trace, os.path.join(output_dir, RASTER_FILENAME)
        )
    )
  else:
    logging.warning(
        'No spikes in layer %d; skipping raster.', result.trace.layer
    )
  for path in written:
    experiment_app.log_to_stdout(
        f'{experiment_app.WRITE_PREFIX}{path}', experiment_app.AnsiColors.GREEN
    )


def run(cfg: runtime_params.ExperimentConfig) -> None:
  output_dir = _output_dir(cfg)
  checkpoint_dir = None
  if _SAVE_CHECKPOINTS.value:
    checkpoint_dir = os.path.join(output_dir, CHECKPOINT_SUBDIR)
  experiment_app.main(
      cfg, output_dir=output_dir, checkpoint_dir=checkpoint_dir
  )


def report(cfg: runtime_params.ExperimentConfig) -> None:
  loaded = report_lib.load_report(_require(_REPORT, 'report'))
  output_dir = _output_dir(cfg)
  written = report_lib.emit_tables(loaded, output_dir)
  written.append(
      svg_plots.emit_accuracy_curves(
          loaded, os.path.join(output_dir, experiment_app.CURVES_FILENAME)
      )
  )
  for path in written:
    experiment_app.log_to_stdout(
        f'{experiment_app.WRITE_PREFIX}{path}', experiment_app.AnsiColors.GREEN
    )


_HANDLERS = {
    'ingest': ingest,
    'train': train,
    'convert': convert,
    'simulate': simulate,
    'run': run,
    'report': report,
}


def main(argv: Sequence[str]) -> int:
  """Dispatches the command in `argv[1]`; flags are already parsed."""
  if len(argv) != 2 or argv[1] not in _HANDLERS:
    sys.stderr.write(_usage())
    sys.stderr.write(
        f'Expected exactly one command out of {list(COMMANDS)}, got'
        f' {list(argv[1:])}.\n'
    )
    return EXIT_INVALID
  command = argv[1]
  start_time = time.time()
  try:
    cfg = build_config()
    _HANDLERS[command](cfg)
  except ValueError as ve:
    experiment_app.log_to_stdout(
        f'Error occurred: {ve}',
        color=experiment_app.AnsiColors.RED,
        exc_info=True,
    )
    sys.stderr.write(f'{command}: {ve}\n')
    return EXIT_INVALID
  except Exception as e:  # pylint: disable=broad-exception-caught
    experiment_app.log_to_stdout(
        f'{command} failed: {e}',
        color=experiment_app.AnsiColors.RED,
        exc_info=True,
    )
    sys.stderr.write(f'{command} failed: {e}\n')
    return EXIT_FAILURE
  experiment_app.log_to_stdout(
      f'{command} finished in {time.time() - start_time:.2f}s',
      color=experiment_app.AnsiColors.GREEN,
  )
  return EXIT_OK


def cli_main(argv: Sequence[str]) -> int:
  """Parses `argv` (program name first) and runs the command.

  Every flag of this program starts from its default, so repeated calls do
  not leak values into each other.

  Returns:
    The exit code.
  """
  for holder in list(_OVERRIDES.values()) + list(_COMMAND_FLAGS):
    flags.FLAGS[holder.name].unparse()
  try:
    remaining = flags.FLAGS(list(argv))
  except flags.Error as e:
    sys.stderr.write(_usage())
    sys.stderr.write(f'{e}\n')
    return EXIT_INVALID
  return main(remaining)


def console_main():
  app.run(main)


if __name__ == '__main__':
  app.run(main)
