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

"""Weight checkpoints.

A checkpoint is an uncompressed numpy `.npz` archive with

  - `__meta__`: a 0-d unicode array holding a JSON object with
    `format_version`, `kind` ("trained_model" or "spiking_network"), `spec`
    (see `ModelSpec.to_config`), `seed`, `training_log` and, for spiking
    networks, `conversion`;
  - one array per parameter, keyed `<layer name>/<param name>`, e.g.
    `conv2d_0/w`.

See docs/output_formats.md for the full layout.
"""

from __future__ import annotations

import json
import os
from typing import Any

from absl import logging
from jax import numpy as jnp
import numpy as np
from snncl import errors
from snncl import jax_utils
from snncl.ann import model as model_lib

FORMAT_VERSION = 1
META_KEY = '__meta__'
KIND_TRAINED_MODEL = 'trained_model'


def _flatten_params(params: model_lib.ModelParams) -> dict[str, np.ndarray]:
  return {
      f'{layer}/{name}': np.asarray(value)
      for layer, layer_params in params.items()
      for name, value in layer_params.items()
  }


def write_archive(
    path: str | os.PathLike,
    model: model_lib.TrainedModel,
    kind: str = KIND_TRAINED_MODEL,
    extra_meta: dict[str, Any] | None = None,
) -> str:
  """Writes `model` (plus optional extra metadata) to `path`."""
  meta = {
      'format_version': FORMAT_VERSION,
      'kind': kind,
      'spec': model.spec.to_config(),
      'seed': model.seed,
      'training_log': list(model.training_log),
  }
  meta.update(extra_meta or {})
  arrays = _flatten_params(model.params)
  arrays[META_KEY] = np.asarray(json.dumps(meta, sort_keys=True))
  path = os.fspath(path)
  directory = os.path.dirname(path)
  if directory:
    os.makedirs(directory, exist_ok=True)
  with open(path, 'wb') as f:
    np.savez(f, **arrays)
  logging.info('Wrote %s checkpoint to %s.', kind, path)
  return path


def read_archive(
    path: str | os.PathLike,
) -> tuple[model_lib.TrainedModel, dict[str, Any]]:
  """Reads a checkpoint written by `write_archive`.

  Returns:
    The model and the full metadata dict.

  Raises:
    ValidationError: if the archive is not a snncl checkpoint or has an
      unsupported format version.
    DimensionError: if the stored parameters do not match the stored spec.
  """
  with np.load(os.fspath(path), allow_pickle=False) as data:
    if META_KEY not in data.files:
      raise errors.ValidationError(f'{path} has no {META_KEY} entry.')
    meta = json.loads(str(data[META_KEY]))
    version = meta.get('format_version')
    if version != FORMAT_VERSION:
      raise errors.ValidationError(
          f'{path} has format version {version}, expected {FORMAT_VERSION}.'
      )
    params: model_lib.ModelParams = {}
    for key in data.files:
      if key == META_KEY:
        continue
      layer, name = key.split('/', 1)
      params.setdefault(layer, {})[name] = jnp.asarray(
          data[key], dtype=jax_utils.float_dtype()
      )
  model = model_lib.TrainedModel(
      spec=model_lib.ModelSpec.from_config(meta['spec']),
      params=params,
      training_log=tuple(float(x) for x in meta['training_log']),
      seed=int(meta['seed']),
  )
  return model, meta


def save_checkpoint(
    model: model_lib.TrainedModel, path: str | os.PathLike
) -> str:
  """Writes a trained model checkpoint; returns the path written."""
  return write_archive(path, model)


def load_checkpoint(path: str | os.PathLike) -> model_lib.TrainedModel:
  """Loads a trained model checkpoint.

  Raises:
    ValidationError: if `path` holds something other than a trained model.
  """
  model, meta = read_archive(path)
  if meta['kind'] != KIND_TRAINED_MODEL:
    raise errors.ValidationError(
        f'{path} holds a {meta["kind"]}, not a {KIND_TRAINED_MODEL}.'
    )
  return model
