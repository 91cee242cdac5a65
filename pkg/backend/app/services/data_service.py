"""
Data service: IDX archives and synthetic Gaussian clusters.
"""
import struct
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from app.core.exceptions import DatasetConsistencyError, IdxFormatError, IdxReadError
from app.core.logging import get_logger
from app.core.rng import derive_rng
from app.core.validators import CountValidator
from app.models.dataset import Dataset

logger = get_logger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
MNIST_VALIDATION = 10_000
MNIST_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
CLUSTER_SCALE = 3.0


class DataService:
    """Data service class."""

    @staticmethod
    def _read_bytes(path: Path) -> bytes:
        try:
            return Path(path).read_bytes()
        except OSError as exc:
            raise IdxReadError(f"cannot read {path}: {exc}") from exc

    @staticmethod
    def _parse(raw: bytes, magic: int, dims: int, path: Path) -> Tuple[Tuple[int, ...], np.ndarray]:
        header = 4 + 4 * dims
        if len(raw) < header:
            raise IdxReadError(f"{path}: truncated header")
        (found,) = struct.unpack(">I", raw[:4])
        if found != magic:
            raise IdxFormatError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
        shape = struct.unpack(f">{dims}I", raw[4:header])
        expected = int(np.prod(shape))
        body = np.frombuffer(raw, dtype=np.uint8, offset=header)
        if body.size < expected:
            raise IdxReadError(f"{path}: truncated body ({body.size} of {expected} bytes)")
        if body.size > expected:
            raise IdxFormatError(f"{path}: {body.size - expected} trailing bytes after the body")
        return shape, body.reshape(shape)

    @staticmethod
    def load_idx(
        images_path: Path,
        labels_path: Path,
        validation_size: int = 0,
        num_classes: Optional[int] = None,
    ) -> Dataset:
        """Big-endian IDX images (rank 3) and labels (rank 1); pixels scaled by 1/255.

        The last ``validation_size`` rows form the validation split.
        """
        (count, rows, cols), images = DataService._parse(
            DataService._read_bytes(images_path), IMAGES_MAGIC, 3, images_path
        )
        (label_count,), labels = DataService._parse(
            DataService._read_bytes(labels_path), LABELS_MAGIC, 1, labels_path
        )
        if count != label_count:
            raise DatasetConsistencyError(f"{count} images but {label_count} labels")
        if count < 1:
            raise DatasetConsistencyError("empty archive")
        if not 0 <= validation_size < count:
            raise DatasetConsistencyError(f"validation_size {validation_size} leaves no training rows")
        labels = labels.astype(np.int64)
        k = num_classes if num_classes is not None else int(labels.max()) + 1
        if labels.max() >= k:
            raise DatasetConsistencyError(f"label {labels.max()} >= num_classes {k}")
        dataset = Dataset(
            inputs=images.reshape(count, rows * cols).astype(np.float64) / 255.0,
            labels=labels,
            num_classes=k,
            val_start=count - validation_size,
            image_shape=(rows, cols),
        )
        logger.info("dataset.loaded", path=str(images_path), size=count, classes=k)
        return dataset

    @staticmethod
    def load_mnist(directory: Path) -> Dataset:
        """Training archive of an MNIST directory, last 10,000 images held out."""
        directory = Path(directory)
        images, labels = (directory / name for name in MNIST_FILES)
        return DataService.load_idx(images, labels, validation_size=MNIST_VALIDATION, num_classes=10)

    @staticmethod
    def has_mnist(directory: Optional[Path]) -> bool:
        return directory is not None and all((Path(directory) / name).is_file() for name in MNIST_FILES)

    @staticmethod
    def write_idx(dataset: Dataset, images_path: Path, labels_path: Path) -> None:
        """Write inputs as rank-3 uint8 images (round(255 x)) and labels as rank-1 bytes."""
        rows, cols = dataset.image_shape or (1, dataset.input_dim)
        if rows * cols != dataset.input_dim:
            raise DatasetConsistencyError("image_shape does not match input_dim")
        if dataset.num_classes > 256:
            raise DatasetConsistencyError("IDX labels are single bytes")
        pixels = np.clip(np.rint(dataset.inputs * 255.0), 0, 255).astype(np.uint8)
        with open(images_path, "wb") as f:
            f.write(struct.pack(">IIII", IMAGES_MAGIC, dataset.size, rows, cols))
            f.write(pixels.tobytes())
        with open(labels_path, "wb") as f:
            f.write(struct.pack(">II", LABELS_MAGIC, dataset.size))
            f.write(dataset.labels.astype(np.uint8).tobytes())

    @staticmethod
    def synthetic_clusters(
        num_classes: int,
        dim: int,
        per_class: int,
        spread: float,
        seed: int,
        val_per_class: Optional[int] = None,
    ) -> Dataset:
        """Gaussian clusters around 3 * N(0, 1) class means, validation drawn from a derived stream."""
        for value, name in ((num_classes, "num_classes"), (dim, "dim"), (per_class, "per_class")):
            CountValidator.validate_count(value, name)
        if spread < 0:
            raise DatasetConsistencyError("spread must be >= 0")
        val_per_class = max(1, per_class // 5) if val_per_class is None else val_per_class
        means = CLUSTER_SCALE * derive_rng(seed, 0).standard_normal((num_classes, dim))

        def draw(count: int, stream: int) -> Tuple[np.ndarray, np.ndarray]:
            rng = derive_rng(seed, stream)
            labels = np.repeat(np.arange(num_classes), count)
            labels = labels[rng.permutation(labels.size)]
            inputs = means[labels] + spread * rng.standard_normal((labels.size, dim))
            return inputs, labels

        train_x, train_y = draw(per_class, 1)
        val_x, val_y = draw(val_per_class, 2) if val_per_class > 0 else (np.empty((0, dim)), np.empty(0, dtype=np.int64))
        return Dataset(
            inputs=np.vstack([train_x, val_x]),
            labels=np.concatenate([train_y, val_y]).astype(np.int64),
            num_classes=num_classes,
            val_start=train_y.size,
        )

    @staticmethod
    def sample_batch_indices(dataset: Dataset, batch: int, rng: np.random.Generator) -> np.ndarray:
        """Training rows drawn i.i.d. with replacement."""
        CountValidator.validate_count(batch, "batch")
        return rng.integers(0, dataset.val_start, size=batch)

    @staticmethod
    def shuffle_training(dataset: Dataset, rng: np.random.Generator) -> Dataset:
        """Permute training rows; validation rows stay in place."""
        order = np.concatenate([rng.permutation(dataset.val_start), np.arange(dataset.val_start, dataset.size)])
        return Dataset(
            inputs=dataset.inputs[order],
            labels=dataset.labels[order],
            num_classes=dataset.num_classes,
            val_start=dataset.val_start,
            image_shape=dataset.image_shape,
        )

    @staticmethod
    def nearest_mean_error(dataset: Dataset) -> float:
        """Validation error of the nearest-class-mean classifier fitted on training rows."""
        if not dataset.has_validation:
            raise DatasetConsistencyError("dataset has no validation split")
        counts = np.bincount(dataset.train_labels, minlength=dataset.num_classes)
        if np.any(counts == 0):
            missing = np.flatnonzero(counts == 0).tolist()
            raise DatasetConsistencyError(f"classes {missing} have no training rows")
        means = np.stack([
            dataset.train_inputs[dataset.train_labels == c].mean(axis=0)
            for c in range(dataset.num_classes)
        ])
        dist = ((dataset.val_inputs[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        return float(np.mean(np.argmin(dist, axis=1) != dataset.val_labels))

    @staticmethod
    def resolve(source: str, config_seed: int, num_classes: int, dim: int, per_class: int, spread: float,
                mnist_dir: Optional[Path] = None) -> Dataset:
        """'synthetic', 'mnist' (settings directory) or an MNIST-layout directory path."""
        if source == "synthetic":
            return DataService.synthetic_clusters(num_classes, dim, per_class, spread, config_seed)
        directory = mnist_dir if source == "mnist" else Path(source)
        if directory is None:
            raise DatasetConsistencyError("MNIST_DIR is not set")
        return DataService.load_mnist(directory)
