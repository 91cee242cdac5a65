"""
Tests for the data service.
"""
import struct

import numpy as np
import pytest

from app.core.exceptions import DatasetConsistencyError, DatasetError, IdxFormatError, IdxReadError
from app.core.rng import derive_rng
from app.models.dataset import Dataset
from app.services.data_service import IMAGES_MAGIC, LABELS_MAGIC, DataService


@pytest.fixture
def tiny_dataset() -> Dataset:
    rng = derive_rng(0, 0)
    pixels = rng.integers(0, 256, size=(12, 6))
    return Dataset(
        inputs=pixels / 255.0,
        labels=np.arange(12) % 3,
        num_classes=3,
        val_start=12,
        image_shape=(2, 3),
    )


@pytest.fixture
def idx_pair(tmp_path, tiny_dataset):
    images, labels = tmp_path / "images.idx", tmp_path / "labels.idx"
    DataService.write_idx(tiny_dataset, images, labels)
    return images, labels


class TestIdx:
    def test_load_written_archive(self, idx_pair, tiny_dataset):
        loaded = DataService.load_idx(*idx_pair, validation_size=4)
        assert loaded.size == 12
        assert loaded.image_shape == (2, 3)
        assert loaded.val_start == 8
        assert loaded.num_classes == 3
        np.testing.assert_allclose(loaded.inputs, tiny_dataset.inputs)
        np.testing.assert_array_equal(loaded.labels, tiny_dataset.labels)

    def test_header_is_big_endian(self, idx_pair):
        raw = idx_pair[0].read_bytes()
        assert struct.unpack(">IIII", raw[:16]) == (IMAGES_MAGIC, 12, 2, 3)
        assert struct.unpack(">II", idx_pair[1].read_bytes()[:8]) == (LABELS_MAGIC, 12)

    def test_wrong_magic(self, idx_pair):
        images, labels = idx_pair
        with pytest.raises(IdxFormatError):
            DataService.load_idx(labels, labels)

    def test_truncated_body(self, idx_pair):
        images, labels = idx_pair
        images.write_bytes(images.read_bytes()[:-5])
        with pytest.raises(IdxReadError):
            DataService.load_idx(images, labels)

    def test_trailing_bytes(self, idx_pair):
        images, labels = idx_pair
        labels.write_bytes(labels.read_bytes() + b"\x00\x01")
        with pytest.raises(IdxFormatError, match="trailing"):
            DataService.load_idx(images, labels)

    def test_truncated_header(self, tmp_path, idx_pair):
        short = tmp_path / "short.idx"
        short.write_bytes(b"\x00\x00\x08")
        with pytest.raises(IdxReadError):
            DataService.load_idx(short, idx_pair[1])

    def test_missing_file(self, tmp_path, idx_pair):
        with pytest.raises(IdxReadError):
            DataService.load_idx(tmp_path / "nope", idx_pair[1])

    def test_count_mismatch(self, tmp_path, idx_pair):
        labels = tmp_path / "labels5.idx"
        labels.write_bytes(struct.pack(">II", LABELS_MAGIC, 5) + bytes(5))
        with pytest.raises(DatasetConsistencyError):
            DataService.load_idx(idx_pair[0], labels)

    def test_validation_split_must_leave_training_rows(self, idx_pair):
        with pytest.raises(DatasetConsistencyError):
            DataService.load_idx(*idx_pair, validation_size=12)

    def test_label_outside_class_count(self, idx_pair):
        with pytest.raises(DatasetConsistencyError):
            DataService.load_idx(*idx_pair, num_classes=2)

    def test_errors_share_a_base(self):
        assert issubclass(IdxReadError, DatasetError) and issubclass(IdxReadError, OSError)

    def test_mnist_layout(self, tmp_path, tiny_dataset):
        assert not DataService.has_mnist(tmp_path)
        assert not DataService.has_mnist(None)
        DataService.write_idx(tiny_dataset, tmp_path / "train-images-idx3-ubyte", tmp_path / "train-labels-idx1-ubyte")
        assert DataService.has_mnist(tmp_path)
        # 12 rows cannot hold the 10,000-image validation split
        with pytest.raises(DatasetConsistencyError):
            DataService.load_mnist(tmp_path)


class TestSynthetic:
    def test_shapes_and_balance(self):
        data = DataService.synthetic_clusters(4, 5, 30, 1.0, seed=2)
        assert data.val_start == 120
        assert data.size == 120 + 4 * 6
        assert data.input_dim == 5
        assert np.bincount(data.train_labels).tolist() == [30] * 4

    def test_deterministic(self):
        a = DataService.synthetic_clusters(3, 4, 10, 1.0, seed=7)
        b = DataService.synthetic_clusters(3, 4, 10, 1.0, seed=7)
        np.testing.assert_array_equal(a.inputs, b.inputs)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_tight_clusters_are_separable(self):
        data = DataService.synthetic_clusters(5, 10, 50, 0.1, seed=0)
        assert DataService.nearest_mean_error(data) == 0.0

    def test_no_validation_split(self):
        data = DataService.synthetic_clusters(2, 2, 5, 1.0, seed=0, val_per_class=0)
        assert not data.has_validation
        with pytest.raises(DatasetConsistencyError):
            DataService.nearest_mean_error(data)

    def test_class_without_training_rows(self, tiny_dataset):
        data = Dataset(
            inputs=tiny_dataset.inputs, labels=np.array([0, 1] * 4 + [2] * 4), num_classes=3, val_start=8
        )
        with pytest.raises(DatasetConsistencyError, match="no training rows"):
            DataService.nearest_mean_error(data)

    def test_negative_spread(self):
        with pytest.raises(DatasetConsistencyError):
            DataService.synthetic_clusters(2, 2, 5, -1.0, seed=0)


class TestBatches:
    def test_indices_stay_in_training_rows(self, rng):
        data = DataService.synthetic_clusters(3, 2, 10, 1.0, seed=0)
        idx = DataService.sample_batch_indices(data, 500, rng)
        assert idx.min() >= 0 and idx.max() < data.val_start

    def test_shuffle_keeps_validation(self, rng):
        data = DataService.synthetic_clusters(3, 2, 10, 1.0, seed=0)
        shuffled = DataService.shuffle_training(data, rng)
        np.testing.assert_array_equal(shuffled.val_inputs, data.val_inputs)
        assert sorted(shuffled.train_labels.tolist()) == sorted(data.train_labels.tolist())

    def test_resolve(self):
        data = DataService.resolve("synthetic", 0, 3, 2, 10, 1.0)
        assert data.num_classes == 3
        with pytest.raises(DatasetConsistencyError):
            DataService.resolve("mnist", 0, 3, 2, 10, 1.0, mnist_dir=None)
