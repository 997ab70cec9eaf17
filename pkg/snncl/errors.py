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

"""Exceptions raised across snncl.

Input problems (bad shapes, malformed files, invalid configs) subclass
ValueError so callers can treat them as user errors. Failures that only show
up while running (diverging training) subclass RuntimeError.
"""


class SnnclError(Exception):
  """Base class mixed into every snncl exception."""


class DimensionError(SnnclError, ValueError):
  """Raised when tensor shapes do not compose."""


class IdxFormatError(SnnclError, ValueError):
  """Raised when an IDX stream has an unexpected magic number or header."""


class IdxLengthError(SnnclError, ValueError):
  """Raised when an IDX payload is shorter or longer than its header says."""


class ValidationError(SnnclError, ValueError):
  """Raised when values are outside their documented domain."""


class EmptySubsetError(SnnclError, ValueError):
  """Raised when a selection or evaluation set has no examples."""


class ConversionError(SnnclError, ValueError):
  """Raised when a model cannot be converted to a spiking network."""


class ConfigError(SnnclError, ValueError):
  """Raised for unknown or invalid configuration entries."""


class TrainingDivergedError(SnnclError, RuntimeError):
  """Raised when the loss or a gradient becomes non-finite.

  Attributes:
    diagnostics: Mapping with the offending parameter name, optimizer step and
      last loss value.
  """

  def __init__(self, message: str, diagnostics: dict[str, object]):
    super().__init__(message)
    self.diagnostics = diagnostics
