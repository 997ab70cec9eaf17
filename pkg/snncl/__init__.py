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

"""Library functionality for snncl.

Class-incremental training of a convolutional classifier, its conversion to a
spiking network, and measurement of how much each one forgets.
"""

# pylint: disable=g-importing-member,g-import-not-at-top

import os

import jax

# Default snncl JAX precision is f64. It must be set before any array exists.
precision = os.getenv('SNNCL_PRECISION', 'f64')
assert precision == 'f64' or precision == 'f32', (
    'Unknown SNNCL_PRECISION environment variable: %s' % precision
)
if precision == 'f64':
  jax.config.update('jax_enable_x64', True)

from snncl import errors
from snncl import math_utils
from snncl import tensor_ops
from snncl.ann.model import ModelSpec
from snncl.ann.model import TrainedModel
from snncl.config.config_args import recursive_replace
from snncl.config.runtime_params import ExperimentConfig
from snncl.data.dataset import Dataset
from snncl.data.dataset import IncrementSchedule
from snncl.experiment import EvalReport
from snncl.experiment import run_experiment
from snncl.snn.convert import convert
from snncl.snn.convert import SpikingNetwork
from snncl.snn.simulator import SimResult
from snncl.snn.simulator import simulate
from snncl.snn.simulator import SpikeTrace

# pylint: enable=g-importing-member,g-import-not-at-top
