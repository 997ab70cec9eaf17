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

"""File I/O for IDX files (the MNIST / Fashion-MNIST container format).

Image files:

  [offset] [type]          [value]          [description]
  0000     32 bit integer  0x00000803(2051) magic number (MSB first)
  0004     32 bit integer  N                number of images
  0008     32 bit integer  R                number of rows
  0012     32 bit integer  C                number of columns
  0016     unsigned byte   ??               pixels, row-wise

Label files:

  0000     32 bit integer  0x00000801(2049) magic number (MSB first)
  0004     32 bit integer  N                number of items
  0008     unsigned byte   ??               labels in 0..9

Gzipped files (the official distribution) are decompressed transparently.
"""

import gzip
import io
import os
from typing import BinaryIO

from absl import logging
import immutabledict
import numpy as np
from snncl import errors

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
NUM_CLASSES = 10

_GZIP_MAGIC = b'\x1f\x8b'
_HEADER_DTYPE = np.dtype('>u4')

# Standard file names of the two supported datasets, per split.
STANDARD_FILE_NAMES = immutabledict.immutabledict({
    'train': ('train-images-idx3-ubyte', 'train-labels-idx1-ubyte'),
    'test': ('t10k-images-idx3-ubyte', 't10k-labels-idx1-ubyte'),
})

DATA_DIR_ENV_VAR = 'SNNCL_DATA_DIR'
DEFAULT_DATA_DIR = 'data'

IdxSource = bytes | bytearray | str | os.PathLike | BinaryIO


def _read_all(source: IdxSource) -> bytes:
  if isinstance(source, (bytes, bytearray)):
    raw = bytes(source)
  elif isinstance(source, (str, os.PathLike)):
    with open(source, 'rb') as f:
      raw = f.read()
  else:
    raw = source.read()
  if raw[:2] == _GZIP_MAGIC:
    raw = gzip.decompress(raw)
  return raw


def _read_header(raw: bytes, n_fields: int, expected_magic: int) -> np.ndarray:
  header_len = 4 * n_fields
  if len(raw) < header_len:
    raise errors.IdxLengthError(
        f'IDX header needs {header_len} bytes, stream has {len(raw)}.'
    )
  header = np.frombuffer(raw[:header_len], dtype=_HEADER_DTYPE)
  magic = int(header[0])
  if magic != expected_magic:
    raise errors.IdxFormatError(
        f'Bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}.'
    )
  return header


def _payload(raw: bytes, offset: int, expected: int) -> np.ndarray:
  actual = len(raw) - offset
  if actual != expected:
    raise errors.IdxLengthError(
        f'IDX payload length mismatch: expected {expected} bytes, got'
        f' {actual}.'
    )
  return np.frombuffer(raw, dtype=np.uint8, offset=offset)


def load_idx_images(source: IdxSource) -> np.ndarray:
  """Parses an IDX image stream.

  Args:
    source: Raw bytes, a path, or a binary file object. Gzip is detected from
      the stream's first two bytes.

  Returns:
    uint8 array of shape (count, rows, cols) with values 0..255. Use
    `normalize_images` to scale into [0, 1].

  Raises:
    IdxFormatError: if the magic number is not 0x00000803.
    IdxLengthError: if the header or payload is truncated.
  """
  raw = _read_all(source)
  header = _read_header(raw, 4, IMAGE_MAGIC)
  count, rows, cols = (int(v) for v in header[1:])
  pixels = _payload(raw, 16, count * rows * cols)
  return pixels.reshape(count, rows, cols).copy()


def load_idx_labels(source: IdxSource) -> np.ndarray:
  """Parses an IDX label stream.

  Args:
    source: Raw bytes, a path, or a binary file object.

  Returns:
    uint8 array of shape (count,) with values in 0..9.

  Raises:
    IdxFormatError: if the magic number is not 0x00000801.
    IdxLengthError: if the header or payload is truncated.
    ValidationError: if a label is outside 0..9.
  """
  raw = _read_all(source)
  header = _read_header(raw, 2, LABEL_MAGIC)
  count = int(header[1])
  labels = _payload(raw, 8, count).copy()
  if labels.size and int(labels.max()) >= NUM_CLASSES:
    bad = int(np.argmax(labels >= NUM_CLASSES))
    raise errors.ValidationError(
        f'Label {int(labels[bad])} at index {bad} is outside 0..9.'
    )
  return labels


def normalize_images(raw: np.ndarray, dtype=np.float64) -> np.ndarray:
  """Scales byte pixels by 1/255 into [0, 1]."""
  return raw.astype(dtype) / 255.0


def write_idx_images(images: np.ndarray, compress: bool = False) -> bytes:
  """Serializes a uint8 (count, rows, cols) array as an IDX image stream."""
  images = np.asarray(images)
  if images.ndim != 3:
    raise errors.DimensionError(
        f'IDX images must be (count, rows, cols), got {images.shape}.'
    )
  header = np.array((IMAGE_MAGIC,) + images.shape, dtype=_HEADER_DTYPE)
  raw = header.tobytes() + images.astype(np.uint8).tobytes()
  return _maybe_compress(raw, compress)


def write_idx_labels(labels: np.ndarray, compress: bool = False) -> bytes:
  """Serializes a (count,) label array as an IDX label stream."""
  labels = np.asarray(labels)
  header = np.array((LABEL_MAGIC, labels.shape[0]), dtype=_HEADER_DTYPE)
  raw = header.tobytes() + labels.astype(np.uint8).tobytes()
  return _maybe_compress(raw, compress)


def _maybe_compress(raw: bytes, compress: bool) -> bytes:
  if not compress:
    return raw
  buf = io.BytesIO()
  # mtime=0 keeps the compressed bytes reproducible.
  with gzip.GzipFile(fileobj=buf, mode='wb', mtime=0) as f:
    f.write(raw)
  return buf.getvalue()


def resolve_data_dir(data_dir: str | None) -> str:
  """Returns `data_dir`, else $SNNCL_DATA_DIR, else the default directory."""
  if data_dir is not None:
    return data_dir
  if DATA_DIR_ENV_VAR in os.environ:
    return os.environ[DATA_DIR_ENV_VAR]
  return DEFAULT_DATA_DIR


def find_idx_file(data_dir: str, dataset_name: str, file_name: str) -> str:
  """Locates `file_name` (optionally gzipped) for a dataset.

  Looks in `<data_dir>/<dataset_name>/` first, then directly in `data_dir`.
  The flat layout is only consulted for MNIST, since Fashion-MNIST ships the
  same file names.

  Args:
    data_dir: Root data directory.
    dataset_name: "mnist" or "fashion-mnist".
    file_name: Base IDX file name, without ".gz".

  Returns:
    Path of the first existing candidate.

  Raises:
    FileNotFoundError: if no candidate exists.
  """
  dirs = [os.path.join(data_dir, dataset_name)]
  if dataset_name == 'mnist':
    dirs.append(data_dir)
  candidates = []
  for d in dirs:
    for name in (file_name, file_name + '.gz'):
      candidates.append(os.path.join(d, name))
  for path in candidates:
    if os.path.exists(path):
      return path
  raise FileNotFoundError(
      f'Could not find {file_name} for {dataset_name}; tried {candidates}.'
      f' Set ${DATA_DIR_ENV_VAR} or --data_dir.'
  )


def load_split_arrays(
    data_dir: str | None,
    dataset_name: str,
    split: str,
    file_names: tuple[str, str] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
  """Loads raw (images, labels) for one split of a dataset from disk."""
  data_dir = resolve_data_dir(data_dir)
  image_name, label_name = file_names or STANDARD_FILE_NAMES[split]
  image_path = find_idx_file(data_dir, dataset_name, image_name)
  label_path = find_idx_file(data_dir, dataset_name, label_name)
  images = load_idx_images(image_path)
  labels = load_idx_labels(label_path)
  if images.shape[0] != labels.shape[0]:
    raise errors.ValidationError(
        f'{image_path} has {images.shape[0]} images but {label_path} has'
        f' {labels.shape[0]} labels.'
    )
  logging.info(
      'Loaded %d %s %s examples of %dx%d from %s.',
      images.shape[0],
      dataset_name,
      split,
      images.shape[1],
      images.shape[2],
      os.path.dirname(image_path),
  )
  return images, labels
