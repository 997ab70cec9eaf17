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

"""Incremental training and evaluation of the classifier."""

from __future__ import annotations

import dataclasses
import math
import time

from absl import logging
import jax
from jax import numpy as jnp
import numpy as np
from snncl import errors
from snncl import math_utils
from snncl.ann import model as model_lib
from snncl.ann import optimizer as optimizer_lib
from snncl.data import dataset as dataset_lib


def _shuffle_key(seed: int, increment: int, epoch: int) -> jax.Array:
  key = jax.random.PRNGKey(seed)
  return jax.random.fold_in(jax.random.fold_in(key, increment), epoch)


def train_increment(
    model: model_lib.TrainedModel,
    train_subset: dataset_lib.Dataset,
    epochs: int = 10,
    batch_size: int = 200,
    opt: optimizer_lib.OptimizerState | None = None,
    seed: int = 0,
    increment: int = 0,
) -> model_lib.TrainedModel:
  """Trains `model` on one increment's examples.

  Weights carry over from `model`; optimizer moments always start from zero,
  so each increment is a separate training run on the same weights.

  Args:
    model: Model to continue training.
    train_subset: Training examples of the current increment only.
    epochs: Passes over `train_subset`. 0 returns `model` unchanged.
    batch_size: Examples per Adam step. The last batch of an epoch may be
      smaller.
    opt: Provides the optimizer hyperparameters (learning rate, betas, eps,
      l2). Its moments are ignored. Defaults to `OptimizerState()`.
    seed: Experiment seed driving the per-epoch shuffles.
    increment: Increment index, folded into the shuffle key so increments see
      different orders.

  Returns:
    The trained model, with the mean loss of every epoch appended to its
    training log.

  Raises:
    EmptySubsetError: if `train_subset` has no examples.
    ValidationError: if epochs < 0 or batch_size < 1.
    TrainingDivergedError: if the loss or a gradient becomes non-finite.
  """
  if len(train_subset) == 0:
    raise errors.EmptySubsetError('Cannot train on an empty subset.')
  if epochs < 0:
    raise errors.ValidationError(f'epochs must be >= 0, got {epochs}.')
  if batch_size < 1:
    raise errors.ValidationError(f'batch_size must be >= 1, got {batch_size}.')
  if epochs == 0:
    return model
  model_lib.check_labels(model.spec, train_subset.labels)
  hyper = opt if opt is not None else optimizer_lib.OptimizerState()
  state = optimizer_lib.init_optimizer(
      model.params,
      learning_rate=hyper.learning_rate,
      beta1=hyper.beta1,
      beta2=hyper.beta2,
      eps=hyper.eps,
      l2=hyper.l2,
  )

  images = jnp.asarray(train_subset.as_batch())
  labels = jnp.asarray(train_subset.labels, dtype=jnp.int32)
  n = len(train_subset)
  num_batches = math.ceil(n / batch_size)
  params = model.params
  log = list(model.training_log)
  logging.info(
      'Training increment %d on classes %s: %d examples, %d epochs of %d'
      ' batches.',
      increment,
      list(train_subset.classes),
      n,
      epochs,
      num_batches,
  )

  for epoch in range(epochs):
    epoch_start = time.time()
    order = jax.random.permutation(_shuffle_key(seed, increment, epoch), n)
    total = 0.0
    for b in range(num_batches):
      idx = order[b * batch_size : (b + 1) * batch_size]
      loss, grads = model_lib.loss_and_grads(
          model.spec, params, images[idx], labels[idx], state.l2
      )
      loss = float(loss)
      if not math.isfinite(loss):
        raise errors.TrainingDivergedError(
            f'Non-finite loss {loss} in epoch {epoch}, batch {b}.',
            diagnostics={
                'param': None,
                'step': int(state.step) + 1,
                'loss': loss,
            },
        )
      params, state = optimizer_lib.adam_step(state, params, grads, loss)
      total += loss * int(idx.shape[0])
    mean_loss = total / n
    log.append(mean_loss)
    logging.info(
        'Increment %d epoch %d/%d: mean loss %.6f (%.2fs).',
        increment,
        epoch + 1,
        epochs,
        mean_loss,
        time.time() - epoch_start,
    )

  return dataclasses.replace(model, params=params, training_log=tuple(log))


@dataclasses.dataclass(frozen=True, eq=False)
class Evaluation:
  """Classification results on a labeled set.

  Attributes:
    accuracy: Fraction of correct argmax predictions.
    per_class_accuracy: Accuracy over each present class's own examples.
    mean_true_class_probability: Mean over examples of p[true label].
    probabilities: (N, 10) per-example probabilities.
    predictions: (N,) argmax predictions, ties toward the lowest class id.
    labels: (N,) true labels.
  """

  accuracy: float
  per_class_accuracy: dict[int, float]
  mean_true_class_probability: float
  probabilities: np.ndarray
  predictions: np.ndarray
  labels: np.ndarray

  def accuracy_on(self, classes) -> float:
    """Accuracy restricted to examples whose label is in `classes`."""
    mask = dataset_lib.class_mask(self.labels, classes)
    if not mask.any():
      raise errors.EmptySubsetError(
          f'No evaluated examples with labels in {sorted(classes)}.'
      )
    return float(np.mean(self.predictions[mask] == self.labels[mask]))


def summarize_predictions(
    probabilities: np.ndarray, labels: np.ndarray
) -> Evaluation:
  """Aggregates per-example probabilities into an Evaluation.

  Shared by the ANN and the spiking-network evaluation so both report
  identical statistics for identical probabilities.

  Raises:
    EmptySubsetError: if there are no examples.
  """
  probabilities = np.asarray(probabilities)
  labels = np.asarray(labels)
  if labels.shape[0] == 0:
    raise errors.EmptySubsetError('Cannot evaluate on an empty set.')
  predictions = np.asarray(math_utils.predict_class(probabilities))
  correct = predictions == labels
  per_class = {
      int(c): float(np.mean(correct[labels == c])) for c in np.unique(labels)
  }
  p_true = np.take_along_axis(probabilities, labels[:, None], axis=-1)[:, 0]
  return Evaluation(
      accuracy=float(np.mean(correct)),
      per_class_accuracy=per_class,
      mean_true_class_probability=float(np.mean(p_true)),
      probabilities=probabilities,
      predictions=predictions,
      labels=labels,
  )


def evaluate(
    model: model_lib.TrainedModel,
    test: dataset_lib.Dataset,
    chunk_size: int = 500,
) -> Evaluation:
  """Argmax accuracy, per-class accuracy and mean true-class probability.

  `chunk_size` images go through each forward pass.

  Raises:
    EmptySubsetError: if `test` has no examples.
  """
  if len(test) == 0:
    raise errors.EmptySubsetError('Cannot evaluate on an empty test set.')
  probabilities = model_lib.predict_probabilities(
      model, test.as_batch(), chunk_size
  )
  return summarize_predictions(probabilities, test.labels)
