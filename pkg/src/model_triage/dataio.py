"""
Dataset ingestion: IDX files, delimited text, and synthetic Gaussian blobs.
"""

from __future__ import annotations

import logging
import re
import struct
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator

from .errors import FormatError
from .nn import SEED_MAX, LabeledDataset

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

_DELIMITER = re.compile(r"[,\s]+")


class SyntheticSpec(BaseModel):
    """Gaussian blobs centred on the vertices of a regular simplex."""

    model_config = ConfigDict(frozen=True)

    class_count: int = Field(ge=2)
    cases_per_class: PositiveInt
    test_cases_per_class: int = Field(default=0, ge=0)
    dimension: PositiveInt
    separation: PositiveFloat = 4.0
    noise_sigma: PositiveFloat = 1.0
    seed: int = Field(default=0, ge=0, le=SEED_MAX)
    allow_projection: bool = True

    @model_validator(mode="after")
    def _check_embedding(self) -> "SyntheticSpec":
        if self.dimension < self.class_count - 1 and not self.allow_projection:
            raise ValueError(
                f"{self.class_count} equidistant centres need dimension >= {self.class_count - 1}"
            )
        return self


def _read_header(raw: bytes, fields: int, path: Path) -> tuple[int, ...]:
    size = 4 * fields
    if len(raw) < size:
        raise FormatError(f"{path.name}: truncated IDX header", offset=len(raw))
    return struct.unpack(f">{fields}I", raw[:size])


def load_idx(
    images_path: str | Path,
    labels_path: str | Path,
    normalize: bool = True,
    class_count: int | None = None,
) -> LabeledDataset:
    """
    Load an IDX image/label pair, flattening each image row-major.

    With ``normalize`` pixel bytes are scaled to [0, 1].
    """
    images_path, labels_path = Path(images_path), Path(labels_path)
    image_bytes = images_path.read_bytes()
    label_bytes = labels_path.read_bytes()

    magic, count, rows, cols = _read_header(image_bytes, 4, images_path)
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(f"{images_path.name}: bad image magic 0x{magic:08x}", offset=0)
    expected = 16 + count * rows * cols
    if len(image_bytes) < expected:
        raise FormatError(f"{images_path.name}: truncated pixel data", offset=len(image_bytes))

    label_magic, label_count = _read_header(label_bytes, 2, labels_path)
    if label_magic != IDX_LABEL_MAGIC:
        raise FormatError(f"{labels_path.name}: bad label magic 0x{label_magic:08x}", offset=0)
    if label_count != count:
        raise FormatError(
            f"{images_path.name} holds {count} images but {labels_path.name} holds {label_count} labels",
            offset=4,
        )
    if len(label_bytes) < 8 + count:
        raise FormatError(f"{labels_path.name}: truncated label data", offset=len(label_bytes))

    pixels = np.frombuffer(image_bytes, dtype=np.uint8, count=count * rows * cols, offset=16)
    inputs = pixels.reshape(count, rows * cols).astype(np.float64)
    if normalize:
        inputs /= 255.0
    labels = np.frombuffer(label_bytes, dtype=np.uint8, count=count, offset=8).astype(np.int64)
    if class_count is None:
        class_count = int(labels.max()) + 1 if count else 1
    logger.info("loaded %d IDX cases of %dx%d from %s", count, rows, cols, images_path)
    return LabeledDataset(inputs, labels, class_count)


def write_idx(
    images: np.ndarray,
    labels: np.ndarray,
    images_path: str | Path,
    labels_path: str | Path,
) -> None:
    """Write uint8 images of shape (count, rows, cols) and their labels as IDX."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    count, rows, cols = images.shape
    Path(images_path).write_bytes(
        struct.pack(">4I", IDX_IMAGE_MAGIC, count, rows, cols) + images.tobytes(order="C")
    )
    Path(labels_path).write_bytes(struct.pack(">2I", IDX_LABEL_MAGIC, labels.shape[0]) + labels.tobytes())


def load_delimited(path: str | Path, class_count: int) -> LabeledDataset:
    """
    Rows of ``label, feature, feature, ...`` separated by commas or whitespace.

    Blank lines and ``#`` comments are skipped.
    """
    path = Path(path)
    rows: list[list[float]] = []
    labels: list[int] = []
    width = None
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        fields = [field for field in _DELIMITER.split(text) if field]
        try:
            values = [float(field) for field in fields]
        except ValueError as exc:
            raise FormatError(f"{path.name}: non-numeric field", line=number) from exc
        if len(values) < 2:
            raise FormatError(f"{path.name}: a row needs a label and at least one feature", line=number)
        if not np.all(np.isfinite(values)):
            raise FormatError(f"{path.name}: NaN or Inf value", line=number)
        label = values[0]
        if label != int(label):
            raise FormatError(f"{path.name}: label {label} is not an integer", line=number)
        if not 0 <= label < class_count:
            raise ValueError(f"{path.name} line {number}: label {int(label)} outside [0, {class_count})")
        if width is None:
            width = len(values) - 1
        elif len(values) - 1 != width:
            raise FormatError(
                f"{path.name}: expected {width} features, found {len(values) - 1}", line=number
            )
        labels.append(int(label))
        rows.append(values[1:])
    if not rows:
        raise ValueError(f"{path.name} contains no cases")
    return LabeledDataset(np.array(rows), np.array(labels), class_count)


def simplex_centers(class_count: int, separation: float, dimension: int, rng: np.random.Generator) -> np.ndarray:
    """
    ``class_count`` points at pairwise distance ``separation`` in ``dimension`` dims.

    Below ``class_count - 1`` dims the simplex is pushed through a random
    orthonormal projection, so distances are only approximate.
    """
    centred = np.eye(class_count) - 1.0 / class_count
    _, _, basis = np.linalg.svd(centred)
    coords = centred @ basis[: class_count - 1].T
    coords *= separation / np.sqrt(2.0)
    if dimension >= class_count - 1:
        embedded = np.zeros((class_count, dimension))
        embedded[:, : class_count - 1] = coords
        return embedded
    projection, _ = np.linalg.qr(rng.standard_normal((class_count - 1, dimension)))
    return coords @ projection


def _sample_blobs(
    centers: np.ndarray, per_class: int, sigma: float, rng: np.random.Generator, first_id: int
) -> LabeledDataset:
    class_count, dimension = centers.shape
    labels = np.repeat(np.arange(class_count), per_class)
    inputs = centers[labels] + sigma * rng.standard_normal((labels.size, dimension))
    order = rng.permutation(labels.size)
    case_ids = np.arange(first_id, first_id + labels.size)
    return LabeledDataset(inputs[order], labels[order], class_count, case_ids)


def generate_synthetic_split(spec: SyntheticSpec) -> tuple[LabeledDataset, LabeledDataset]:
    """Training and test blobs around the same centres; test case ids follow the training ids."""
    rng = np.random.default_rng(spec.seed)
    centers = simplex_centers(spec.class_count, spec.separation, spec.dimension, rng)
    train = _sample_blobs(centers, spec.cases_per_class, spec.noise_sigma, rng, 0)
    test = _sample_blobs(centers, spec.test_cases_per_class, spec.noise_sigma, rng, len(train))
    logger.info(
        "generated %d training and %d test cases in %d classes",
        len(train),
        len(test),
        spec.class_count,
    )
    return train, test


def generate_synthetic(spec: SyntheticSpec) -> LabeledDataset:
    return generate_synthetic_split(spec)[0]
