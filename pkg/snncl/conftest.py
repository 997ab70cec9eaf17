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

"""Pytest hooks for the absltest-based suite."""

import os
import sys

from absl import flags
# Defines --test_srcdir and friends before the flags are parsed.
from absl.testing import absltest  # pylint: disable=unused-import
import jax
import pytest


@pytest.fixture(scope='session', autouse=True)
def parse_flags():
  # absltest reads absl flags; pytest's own arguments are not absl flags.
  flags.FLAGS(sys.argv[:1])


def pytest_report_header(config):
  del config  # Unused.
  precision = 'f64' if jax.config.read('jax_enable_x64') else 'f32'
  slow = os.environ.get('SNNCL_RUN_SLOW_TESTS', '0')
  return f'snncl: precision {precision}, SNNCL_RUN_SLOW_TESTS={slow}'
