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

"""Labeled image datasets and the class-incremental schedule.

A `Dataset` holds 28x28 single-channel images scaled to [0, 1] with integer
labels. An `IncrementSchedule` partitions the class ids into the ordered
groups the trainer sees one after the other; training data of earlier groups
is never shown again.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
import dataclasses
import enum

import numpy as np
from snncl import errors
from snncl.data import idx_loader

NUM_CLASSES = idx_loader.NUM_CLASSES
IMAGE_SIZE = 28

FASHION_MNIST_CLASS_NAMES = (
    'T-shirt/top',
    'Trouser',
    'Pullover',
    'Dress',
    'Coat',
    'Sandal',
    'Shirt',
    'Sneaker',
    'Bag',
    'Ankle boot',
)


@enum.unique
class DatasetSource(enum.Enum):
  MNIST = 'mnist'
  FASHION_MNIST = 'fashion-mnist'
  SYNTHETIC = 'synthetic'


@enum.unique
class Split(enum.Enum):
  TRAIN = 'train'
  TEST = 'test'


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
  """Images and labels of one split of one dataset.

  Attributes:
    images: (N, 28, 28) float array with every pixel in [0, 1].
    labels: (N,) integer class ids.
    split: Which split the examples come from.
    source: Which dataset the examples come from.
  """

  images: np.ndarray
  labels: np.ndarray
  split: Split
  source: DatasetSource

  def __post_init__(self):
    if self.images.shape[0] != self.labels.shape[0]:
      raise errors.ValidationError(
          f'{self.images.shape[0]} images but {self.labels.shape[0]} labels.'
      )
    if self.images.ndim != 3:
      raise errors.DimensionError(
          f'Dataset images must be (N, H, W), got {self.images.shape}.'
      )
    if self.images.size and (
        self.images.min() < 0.0 or self.images.max() > 1.0
    ):
      raise errors.ValidationError('Dataset pixels must lie in [0, 1].')
    if self.labels.size and (
        self.labels.min() < 0 or self.labels.max() >= NUM_CLASSES
    ):
      raise errors.ValidationError(
          f'Dataset labels must lie in 0..{NUM_CLASSES - 1}.'
      )

  def __len__(self) -> int:
    return int(self.labels.shape[0])

  @property
  def classes(self) -> tuple[int, ...]:
    return tuple(int(c) for c in np.unique(self.labels))

  def as_batch(self) -> np.ndarray:
    """Returns the images as an (N, 1, H, W) network input batch."""
    return self.images[:, None, :, :]


@dataclasses.dataclass(frozen=True)
class IncrementSchedule:
  """Ordered, disjoint class groups that drive incremental training.

  Attributes:
    groups: Class-id groups in training order. Each group keeps the order in
      which its classes appeared in the schedule's class order.
    group_size: Nominal group size; only the last group may be smaller.
  """

  groups: tuple[tuple[int, ...], ...]
  group_size: int

  def __len__(self) -> int:
    return len(self.groups)

  @property
  def classes(self) -> tuple[int, ...]:
    return tuple(c for g in self.groups for c in g)

  def seen_classes(self, increment: int) -> tuple[int, ...]:
    """Classes trained on up to and including `increment`."""
    return tuple(c for g in self.groups[: increment + 1] for c in g)

  def previous_classes(self, increment: int) -> tuple[int, ...]:
    """Classes trained on strictly before `increment`."""
    return tuple(c for g in self.groups[:increment] for c in g)


def build_increments(
    class_ids: Iterable[int],
    group_size: int = 2,
    order: Sequence[int] | None = None,
) -> IncrementSchedule:
  """Splits the classes into contiguous chunks of `group_size`.

  Args:
    class_ids: The dataset's class set.
    group_size: Classes per increment (>= 1). A remainder forms a final,
      shorter group.
    order: Explicit class order; must be a permutation of `class_ids`. When
      None the natural ascending order is used.

  Returns:
    The increment schedule.

  Raises:
    ValidationError: if group_size < 1 or `order` is not a permutation of
      `class_ids`.
  """
  class_set = sorted(set(int(c) for c in class_ids))
  if group_size < 1:
    raise errors.ValidationError(f'group_size must be >= 1, got {group_size}.')
  if order is None:
    order = class_set
  else:
    order = [int(c) for c in order]
    if len(order) != len(set(order)) or sorted(order) != class_set:
      raise errors.ValidationError(
          f'Class order {order} is not a permutation of {class_set}.'
      )
  groups = tuple(
      tuple(order[i : i + group_size])
      for i in range(0, len(order), group_size)
  )
  return IncrementSchedule(groups=groups, group_size=group_size)


def class_mask(labels: np.ndarray, classes: Iterable[int]) -> np.ndarray:
  return np.isin(labels, np.asarray(list(classes), dtype=labels.dtype))


def subset_by_classes(ds: Dataset, classes: Iterable[int]) -> Dataset:
  """Keeps exactly the examples whose label is in `classes`, in order.

  Raises:
    ValidationError: if `classes` is empty.
    EmptySubsetError: if no example matches.
  """
  classes = tuple(classes)
  if not classes:
    raise errors.ValidationError('subset_by_classes needs at least one class.')
  mask = class_mask(ds.labels, classes)
  if not mask.any():
    raise errors.EmptySubsetError(
        f'No {ds.source.value} {ds.split.value} examples with labels in'
        f' {sorted(classes)}.'
    )
  return dataclasses.replace(
      ds, images=ds.images[mask], labels=ds.labels[mask]
  )


def label_histogram(ds: Dataset) -> np.ndarray:
  """Per-class example counts, length NUM_CLASSES."""
  return np.bincount(ds.labels.astype(np.int64), minlength=NUM_CLASSES)


def load_dataset(
    source: DatasetSource | str,
    split: Split | str,
    data_dir: str | None = None,
    file_names: tuple[str, str] | None = None,
) -> Dataset:
  """Loads one split of MNIST or Fashion-MNIST from IDX files on disk.

  Args:
    source: "mnist" or "fashion-mnist".
    split: "train" or "test".
    data_dir: Root data directory. Defaults to $SNNCL_DATA_DIR.
    file_names: Optional (images, labels) file names overriding the standard
      ones.

  Returns:
    The dataset with pixels scaled into [0, 1].
  """
  source = DatasetSource(source)
  split = Split(split)
  if source == DatasetSource.SYNTHETIC:
    raise errors.ValidationError(
        'Synthetic datasets are generated, use make_synthetic_dataset.'
    )
  raw_images, labels = idx_loader.load_split_arrays(
      data_dir, source.value, split.value, file_names
  )
  return Dataset(
      images=idx_loader.normalize_images(raw_images),
      labels=labels.astype(np.int32),
      split=split,
      source=source,
  )


def _class_template(label: int) -> np.ndarray:
  """A fixed stroke pattern per class: a bar whose position encodes the id."""
  template = np.zeros((IMAGE_SIZE, IMAGE_SIZE))
  band = 3 + (label % 5) * 5
  if label < 5:
    template[band : band + 3, 4:24] = 1.0
  else:
    template[4:24, band : band + 3] = 1.0
  return template


def make_synthetic_dataset(
    n_per_class: int,
    classes: Iterable[int] = range(NUM_CLASSES),
    seed: int = 0,
    split: Split | str = Split.TRAIN,
    noise: float = 0.3,
) -> Dataset:
  """Generates a small learnable dataset with the MNIST layout.

  Each class is a bar (horizontal for 0..4, vertical for 5..9) at a
  class-specific position, plus uniform pixel noise. Examples are interleaved
  by class so any prefix is roughly balanced.

  Args:
    n_per_class: Examples generated for every class.
    classes: Class ids to generate.
    seed: Seed of the noise generator. The test split offsets it so the two
      splits never share noise.
    split: Split tag of the result.
    noise: Maximum noise amplitude added to the template.

  Returns:
    Dataset tagged `synthetic`.
  """
  split = Split(split)
  classes = tuple(int(c) for c in classes)
  rng = np.random.default_rng(seed + (0 if split == Split.TRAIN else 7919))
  images, labels = [], []
  for _ in range(n_per_class):
    for c in classes:
      img = _class_template(c) * (1.0 - noise)
      img = img + rng.uniform(0.0, noise, size=img.shape)
      images.append(np.clip(img, 0.0, 1.0))
      labels.append(c)
  return Dataset(
      images=np.stack(images) if images else np.zeros((0, 28, 28)),
      labels=np.asarray(labels, dtype=np.int32),
      split=split,
      source=DatasetSource.SYNTHETIC,
  )
