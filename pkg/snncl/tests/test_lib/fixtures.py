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

"""Small models, datasets and configs shared by tests."""

import os

from absl.testing import absltest
import numpy as np
from snncl.ann import layers as layers_lib
from snncl.ann import model as model_lib
from snncl.config import config_args
from snncl.config import runtime_params
from snncl.data import dataset as dataset_lib
from snncl.data import idx_loader

# Set to 1 to run the long MNIST acceptance runs.
SLOW_TESTS_ENV_VAR = 'SNNCL_RUN_SLOW_TESTS'


def run_slow_tests() -> bool:
  return os.environ.get(SLOW_TESTS_ENV_VAR, '0') == '1'


def mnist_available(source: str = 'mnist') -> bool:
  """Whether the official IDX files of `source` can be found."""
  data_dir = idx_loader.resolve_data_dir(None)
  try:
    for image_name, label_name in idx_loader.STANDARD_FILE_NAMES.values():
      idx_loader.find_idx_file(data_dir, source, image_name)
      idx_loader.find_idx_file(data_dir, source, label_name)
  except FileNotFoundError:
    return False
  return True


def tiny_spec() -> model_lib.ModelSpec:
  """One strided convolution and the output layer."""
  return model_lib.ModelSpec(
      layers=(
          layers_lib.Conv2D(4, kernel=3, stride=2),
          layers_lib.ReLU(),
          layers_lib.Flatten(),
          layers_lib.Dense(model_lib.NUM_CLASSES),
      )
  )


def tiny_config(**changes) -> runtime_params.ExperimentConfig:
  """A synthetic experiment that runs in seconds.

  Args:
    **changes: Flat (dotted or bare) config overrides.

  Returns:
    The config.
  """
  base = {
      'dataset.source': 'synthetic',
      'synthetic_train_per_class': 20,
      'synthetic_test_per_class': 5,
      'architecture': 'small',
      'epochs': 2,
      'batch_size': 20,
      'n_steps': 20,
      'readout_window': 10,
      'chunk_size': 50,
  }
  base.update(changes)
  return config_args.build_config(overrides=base)


def write_idx_split(
    directory: str,
    split: str,
    images: np.ndarray,
    labels: np.ndarray,
    compress: bool = False,
) -> tuple[str, str]:
  """Writes one split under its standard file names into `directory`."""
  os.makedirs(directory, exist_ok=True)
  image_name, label_name = idx_loader.STANDARD_FILE_NAMES[split]
  suffix = '.gz' if compress else ''
  image_path = os.path.join(directory, image_name + suffix)
  label_path = os.path.join(directory, label_name + suffix)
  with open(image_path, 'wb') as f:
    f.write(idx_loader.write_idx_images(images, compress=compress))
  with open(label_path, 'wb') as f:
    f.write(idx_loader.write_idx_labels(labels, compress=compress))
  return image_path, label_path


def write_fake_dataset(
    test_case: absltest.TestCase,
    source: str = 'mnist',
    n_train_per_class: int = 3,
    n_test_per_class: int = 2,
) -> str:
  """Writes synthetic data in the IDX layout and returns the data root."""
  root = test_case.create_tempdir().full_path
  for split, n in (('train', n_train_per_class), ('test', n_test_per_class)):
    ds = dataset_lib.make_synthetic_dataset(n, split=split)
    raw = np.round(ds.images * 255.0).astype(np.uint8)
    write_idx_split(os.path.join(root, source), split, raw, ds.labels)
  return root
