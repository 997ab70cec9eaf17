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

"""Hooks that see per-increment metrics while an experiment runs."""

import abc
from typing import Any


class Spectator(abc.ABC):
  """Observer of a running experiment.

  `run_experiment` calls `reset` once, then for every evaluated increment
  `before_increment`, one `observe` per metric and `after_increment`.
  Only `observe` has to be implemented.
  """

  def reset(self) -> None:
    pass

  def before_increment(self, increment: int) -> None:
    """Called once an increment is trained, before it is evaluated."""
    del increment

  def after_increment(self, increment: int) -> None:
    """Called after all metrics of an increment were observed."""
    del increment

  @abc.abstractmethod
  def observe(self, key: str, data: Any) -> None:
    """Receives one metric.

    Args:
      key: `<model tag>/<metric>`, e.g. `ann/full_test_acc`.
      data: The value, a float, a list or None.
    """


class InMemorySpectator(Spectator):
  """Collects a history of observed values in memory."""

  def __init__(self):
    self._history: dict[str, list[Any]] = {}
    self._increments: list[int] = []

  @property
  def history(self) -> dict[str, list[Any]]:
    """Key to every value observed for it, oldest first."""
    return self._history

  @property
  def increments(self) -> list[int]:
    """Increments that completed, in order."""
    return self._increments

  def reset(self) -> None:
    self._history = {}
    self._increments = []

  def after_increment(self, increment: int) -> None:
    self._increments.append(increment)

  def observe(self, key: str, data: Any) -> None:
    """Appends `data` to the history of `key`."""
    self._history.setdefault(key, []).append(data)


def get_data_at_index(
    spectator: InMemorySpectator, index: int
) -> dict[str, Any]:
  """The `index`-th observation of every key."""
  return {key: data[index] for key, data in spectator.history.items()}
