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

"""Unit tests for snncl.data.dataset."""

from absl.testing import absltest
from absl.testing import parameterized
import numpy as np
from snncl import errors
from snncl.data import dataset as dataset_lib
from snncl.tests.test_lib import fixtures


class DatasetTest(parameterized.TestCase):
  """Unit tests for the `snncl.data.dataset` module."""

  def test_default_schedule(self):
    schedule = dataset_lib.build_increments(range(10))
    self.assertEqual(
        schedule.groups, ((0, 1), (2, 3), (4, 5), (6, 7), (8, 9))
    )
    self.assertLen(schedule, 5)

  def test_remainder_forms_last_group(self):
    schedule = dataset_lib.build_increments(range(10), group_size=3)
    self.assertEqual(schedule.groups[-1], (9,))
    self.assertLen(schedule, 4)

  def test_single_group(self):
    schedule = dataset_lib.build_increments(range(10), group_size=10)
    self.assertEqual(schedule.groups, (tuple(range(10)),))

  def test_explicit_order(self):
    order = [9, 8, 7, 6, 5, 4, 3, 2, 1, 0]
    schedule = dataset_lib.build_increments(range(10), order=order)
    self.assertEqual(schedule.groups[0], (9, 8))
    self.assertEqual(schedule.seen_classes(1), (9, 8, 7, 6))
    self.assertEqual(schedule.previous_classes(1), (9, 8))
    self.assertEqual(schedule.previous_classes(0), ())

  @parameterized.named_parameters(
      dict(testcase_name='duplicate', order=[0, 0, 2, 3, 4, 5, 6, 7, 8, 9]),
      dict(testcase_name='missing', order=[0, 1, 2]),
      dict(testcase_name='foreign', order=[0, 1, 2, 3, 4, 5, 6, 7, 8, 10]),
  )
  def test_bad_order(self, order):
    with self.assertRaises(errors.ValidationError):
      dataset_lib.build_increments(range(10), order=order)

  def test_bad_group_size(self):
    with self.assertRaises(errors.ValidationError):
      dataset_lib.build_increments(range(10), group_size=0)

  def test_groups_are_disjoint_and_cover(self):
    schedule = dataset_lib.build_increments(range(10), group_size=4)
    flat = [c for g in schedule.groups for c in g]
    self.assertCountEqual(flat, range(10))
    self.assertLen(set(flat), 10)

  def test_subset_by_classes(self):
    ds = dataset_lib.make_synthetic_dataset(3)
    subset = dataset_lib.subset_by_classes(ds, (2, 7))
    self.assertLen(subset, 6)
    self.assertEqual(subset.classes, (2, 7))
    # Relative order is preserved.
    np.testing.assert_array_equal(subset.labels, [2, 7, 2, 7, 2, 7])

  def test_empty_subset(self):
    ds = dataset_lib.make_synthetic_dataset(2, classes=(0, 1))
    with self.assertRaises(errors.EmptySubsetError):
      dataset_lib.subset_by_classes(ds, (5,))
    with self.assertRaises(errors.ValidationError):
      dataset_lib.subset_by_classes(ds, ())

  def test_label_histogram(self):
    ds = dataset_lib.make_synthetic_dataset(4, classes=(1, 3))
    np.testing.assert_array_equal(
        dataset_lib.label_histogram(ds), [0, 4, 0, 4, 0, 0, 0, 0, 0, 0]
    )

  def test_synthetic_is_deterministic(self):
    a = dataset_lib.make_synthetic_dataset(2, seed=3)
    b = dataset_lib.make_synthetic_dataset(2, seed=3)
    np.testing.assert_array_equal(a.images, b.images)
    self.assertEqual(a.source, dataset_lib.DatasetSource.SYNTHETIC)

  def test_synthetic_splits_differ(self):
    train = dataset_lib.make_synthetic_dataset(1, seed=0, split='train')
    test = dataset_lib.make_synthetic_dataset(1, seed=0, split='test')
    self.assertFalse(np.array_equal(train.images, test.images))
    self.assertEqual(test.split, dataset_lib.Split.TEST)

  def test_synthetic_pixel_range(self):
    ds = dataset_lib.make_synthetic_dataset(2)
    self.assertGreaterEqual(ds.images.min(), 0.0)
    self.assertLessEqual(ds.images.max(), 1.0)
    self.assertEqual(ds.as_batch().shape, (20, 1, 28, 28))

  def test_invalid_pixels(self):
    with self.assertRaises(errors.ValidationError):
      dataset_lib.Dataset(
          images=np.full((1, 28, 28), 2.0),
          labels=np.zeros((1,), dtype=np.int32),
          split=dataset_lib.Split.TRAIN,
          source=dataset_lib.DatasetSource.SYNTHETIC,
      )

  def test_load_dataset_from_idx_files(self):
    root = fixtures.write_fake_dataset(self, n_test_per_class=2)
    ds = dataset_lib.load_dataset('mnist', 'test', root)
    self.assertLen(ds, 20)
    self.assertEqual(ds.split, dataset_lib.Split.TEST)
    self.assertEqual(ds.labels.dtype, np.int32)
    expected = dataset_lib.make_synthetic_dataset(2, split='test')
    np.testing.assert_allclose(ds.images, expected.images, atol=0.5 / 255.0)

  def test_load_dataset_rejects_synthetic(self):
    with self.assertRaises(errors.ValidationError):
      dataset_lib.load_dataset('synthetic', 'train')

  def test_fashion_class_names(self):
    self.assertLen(dataset_lib.FASHION_MNIST_CLASS_NAMES, 10)


if __name__ == '__main__':
  absltest.main()
