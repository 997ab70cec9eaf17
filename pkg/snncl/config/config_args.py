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

"""Functions for building an ExperimentConfig from files and overrides.

A config file is a flat YAML mapping. Keys are either dotted paths
(`training.epochs: 5`) or bare field names (`epochs: 5`, `seed: 7`), which
must name exactly one field across ExperimentConfig and its sections.
`snn_variants` is the one list-valued entry; each item is a mapping of
ConversionVariant fields:

  snn_variants:
    - {name: snn_s10, firing_rate_scale: 10}
    - {name: snn_rate, mode: rate, synapse_tau: 0}
"""

from __future__ import annotations

from collections.abc import Mapping
import dataclasses
import enum
import os
import types
import typing
from typing import Any, TypeVar

import yaml
from snncl import errors
from snncl.config import runtime_params

# TypeVar for generic dataclass types.
_T = TypeVar('_T')


def _field_types(obj: Any) -> dict[str, Any]:
  """Resolved field types of a dataclass instance or class."""
  cls = obj if isinstance(obj, type) else type(obj)
  hints = typing.get_type_hints(cls)
  return {field.name: hints[field.name] for field in dataclasses.fields(cls)}


def _enum_type(field_type: Any) -> type[enum.Enum] | None:
  """The enum class of `field_type`, looking inside `X | None`."""
  candidates = (
      typing.get_args(field_type)
      if isinstance(field_type, types.UnionType)
      or typing.get_origin(field_type) is typing.Union
      else (field_type,)
  )
  for candidate in candidates:
    if typing.get_origin(candidate) is not None:
      continue
    if isinstance(candidate, type) and issubclass(candidate, enum.Enum):
      return candidate
  return None


def _coerce_enum(enum_type: type[enum.Enum], value: Any) -> enum.Enum:
  if isinstance(value, enum_type):
    return value
  try:
    return enum_type(value)
  except ValueError:
    pass
  if isinstance(value, str) and value.upper().replace('-', '_') in (
      enum_type.__members__
  ):
    return enum_type[value.upper().replace('-', '_')]
  raise errors.ConfigError(
      f'{value!r} is not one of {[m.value for m in enum_type]}.'
  )


def recursive_replace(
    obj: _T, ignore_extra_kwargs: bool = False, **changes
) -> _T:
  """Recursive version of `dataclasses.replace`.

  This allows updating of nested dataclasses.
  Assumes all dict-valued keys in `changes` are themselves changes to apply
  to fields of obj. Strings given for enum-typed fields are converted to the
  enum, by value or by member name.

  Args:
    obj: Any dataclass instance.
    ignore_extra_kwargs: If True, any kwargs from `changes` are ignored if they
      do not apply to `obj`. Otherwise they raise ConfigError.
    **changes: Dict of updates to apply to fields of `obj`.

  Returns:
    A copy of `obj` with the changes applied.

  Raises:
    ConfigError: for unknown keys or values that cannot be converted.
  """
  keys_to_types = _field_types(obj)
  flattened_changes = {}
  for key, value in changes.items():
    if key not in keys_to_types:
      if ignore_extra_kwargs:
        continue
      raise errors.ConfigError(
          f'Unknown config key {key!r} for {type(obj).__name__}; known:'
          f' {sorted(keys_to_types)}.'
      )
    current = getattr(obj, key)
    if isinstance(value, Mapping) and dataclasses.is_dataclass(current):
      flattened_changes[key] = recursive_replace(
          current, ignore_extra_kwargs=ignore_extra_kwargs, **value
      )
      continue
    enum_type = _enum_type(keys_to_types[key])
    if enum_type is not None and value is not None:
      value = _coerce_enum(enum_type, value)
    elif isinstance(value, list):
      # YAML has no tuples.
      value = tuple(value)
    flattened_changes[key] = value
  try:
    return dataclasses.replace(obj, **flattened_changes)
  except TypeError as e:
    raise errors.ConfigError(str(e)) from e


def _section_names() -> dict[str, type[Any]]:
  return {
      name: field_type
      for name, field_type in _field_types(
          runtime_params.ExperimentConfig
      ).items()
      if dataclasses.is_dataclass(field_type)
  }


def resolve_key(key: str) -> tuple[str, ...]:
  """Maps a flat config key to its path inside ExperimentConfig.

  Raises:
    ConfigError: if the key names no field, or a bare name is ambiguous.
  """
  top = _field_types(runtime_params.ExperimentConfig)
  sections = _section_names()
  parts = tuple(key.split('.'))
  if len(parts) == 2 and parts[0] in sections:
    if parts[1] in _field_types(sections[parts[0]]):
      return parts
  elif len(parts) == 1:
    if key in top and key not in sections:
      return parts
    matches = [
        (section, key)
        for section, section_type in sections.items()
        if key in _field_types(section_type)
    ]
    if len(matches) == 1:
      return matches[0]
    if len(matches) > 1:
      raise errors.ConfigError(
          f'Config key {key!r} is ambiguous; use one of'
          f' {[".".join(m) for m in matches]}.'
      )
  raise errors.ConfigError(f'Unknown config key {key!r}.')


def unflatten(flat: Mapping[str, Any]) -> dict[str, Any]:
  """Turns flat (dotted or bare) keys into nested recursive_replace changes."""
  nested: dict[str, Any] = {}
  for key, value in flat.items():
    path = resolve_key(str(key))
    if len(path) == 1:
      nested[path[0]] = value
    else:
      nested.setdefault(path[0], {})[path[1]] = value
  return nested


def flatten(cfg: runtime_params.ExperimentConfig) -> dict[str, Any]:
  """Inverse of `unflatten` using dotted keys; enums become their values."""
  flat = {}

  def _plain(value):
    if isinstance(value, enum.Enum):
      return value.value
    if dataclasses.is_dataclass(value):
      return {
          field.name: _plain(getattr(value, field.name))
          for field in dataclasses.fields(value)
      }
    if isinstance(value, tuple):
      return [_plain(v) for v in value]
    return value

  for name in _field_types(cfg):
    value = getattr(cfg, name)
    if dataclasses.is_dataclass(value):
      for inner in _field_types(value):
        flat[f'{name}.{inner}'] = _plain(getattr(value, inner))
    else:
      flat[name] = _plain(value)
  return flat


def load_config_file(path: str | os.PathLike) -> dict[str, Any]:
  """Reads a flat YAML config file.

  Raises:
    ConfigError: if the file is not a flat mapping.
  """
  with open(path, 'r') as f:
    try:
      values = yaml.safe_load(f)
    except yaml.YAMLError as e:
      raise errors.ConfigError(f'Malformed config file {path}: {e}') from e
  if values is None:
    return {}
  if not isinstance(values, dict):
    raise errors.ConfigError(
        f'Config file {path} must hold a key/value mapping.'
    )
  for key, value in values.items():
    if isinstance(value, dict):
      raise errors.ConfigError(
          f'Config file {path} must be flat; use dotted keys instead of the'
          f' nested {key!r} section.'
      )
  return values


def build_config(
    file_values: Mapping[str, Any] | None = None,
    overrides: Mapping[str, Any] | None = None,
    base: runtime_params.ExperimentConfig | None = None,
) -> runtime_params.ExperimentConfig:
  """Defaults, then file values, then overrides (e.g. command-line flags).

  Overrides whose value is None are skipped so unset flags keep the file
  value.
  """
  cfg = base if base is not None else runtime_params.ExperimentConfig()
  for values in (file_values or {}, overrides or {}):
    values = {k: v for k, v in values.items() if v is not None}
    cfg = recursive_replace(cfg, **unflatten(values))
  return cfg
