"""Readers and writers for every external input format.

Formats handled here:

* IDX image/label files (big-endian, bit-compatible with the MNIST distribution)
* probability CSVs: header ``class_0,...,class_{K-1}``, one softmax row per sample
* class-count JSON: ``{"model_id": str, "counts": [int, ...]}``
* sample-set manifests: ``{"model_id": str, "images": path, "labels": path | null}``

All readers return frozen containers whose arrays are marked read-only.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    EmptyInput,
    FormatError,
    GMScoreError,
    NormalizationError,
    PairingError,
    RangeError,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
ROW_SUM_TOL = 1e-4
DEFAULT_CLASSES = 10


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ImageSet:
    """A stack of greyscale images with pixels in [0, 1]."""

    images: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        images = np.array(self.images, dtype=np.float64)
        if images.ndim != 3:
            raise FormatError(f"images must be (N, H, W), got shape {images.shape}")
        if images.shape[0] == 0:
            raise EmptyInput("image set contains no images")
        if images.min() < 0.0 or images.max() > 1.0:
            raise RangeError("pixel intensities must lie in [0, 1]")
        object.__setattr__(self, "images", _frozen(images))

    def __len__(self):
        return self.images.shape[0]

    @property
    def shape(self):
        return self.images.shape

    def flattened(self) -> np.ndarray:
        """Return an (N, H*W) view suitable as visible-unit input."""
        return self.images.reshape(len(self), -1)


@dataclass(frozen=True)
class LabelVector:
    """Integer class indices in ``[0, K-1]``."""

    labels: np.ndarray
    K: int = DEFAULT_CLASSES

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise FormatError("labels must be one-dimensional")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.equal(np.mod(labels, 1), 0)):
                raise FormatError("labels must be integers")
        labels = labels.astype(np.int64)
        if self.K < 1:
            raise RangeError(f"class count K must be >= 1, got {self.K}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.K):
            bad = int(labels[(labels < 0) | (labels >= self.K)][0])
            raise RangeError(f"label {bad} outside [0, {self.K - 1}]")
        object.__setattr__(self, "labels", _frozen(labels))

    def __len__(self):
        return self.labels.shape[0]

    def check_pairs(self, other_len: int, what: str = "samples") -> None:
        if len(self) != other_len:
            raise PairingError(f"{len(self)} labels for {other_len} {what}")


@dataclass(frozen=True)
class ProbabilityMatrix:
    """N softmax rows over K classes, produced by one classifier."""

    rows: np.ndarray
    classifier_id: str = ""

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] < 1:
            raise FormatError(f"probabilities must be (N, K), got shape {rows.shape}")
        if rows.shape[0] == 0:
            raise EmptyInput("probability matrix has no rows")
        if not np.all(np.isfinite(rows)):
            raise RangeError("probabilities must be finite")
        neg = np.flatnonzero((rows < 0).any(axis=1))
        if neg.size:
            raise RangeError(f"row {int(neg[0])} has a negative entry")
        sums = rows.sum(axis=1)
        off = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if off.size:
            raise NormalizationError(int(off[0]), float(sums[off[0]]), ROW_SUM_TOL)
        object.__setattr__(self, "rows", _frozen(rows))

    def __len__(self):
        return self.rows.shape[0]

    @property
    def K(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class ClassCounts:
    """Per-class generated-sample counts for one model."""

    counts: np.ndarray
    model_id: str = ""

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1:
            raise FormatError("counts must be a flat list")
        if counts.size < 2:
            raise RangeError(f"need counts for at least 2 classes, got {counts.size}")
        if not np.all(np.equal(np.mod(counts, 1), 0)):
            raise FormatError("counts must be integers")
        counts = counts.astype(np.int64)
        if (counts < 0).any():
            raise RangeError("counts must be non-negative")
        if counts.sum() == 0:
            raise EmptyInput("all class counts are zero")
        object.__setattr__(self, "counts", _frozen(counts))

    @property
    def K(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_labels(cls, labels: LabelVector, model_id: str = "") -> "ClassCounts":
        return cls(np.bincount(labels.labels, minlength=labels.K), model_id)


@dataclass(frozen=True)
class SampleSet:
    """A resolved sample-set manifest."""

    model_id: str
    images: ImageSet
    labels: Optional[LabelVector] = None
    manifest_path: Optional[Path] = field(default=None, compare=False)

    def __post_init__(self):
        if self.labels is not None:
            self.labels.check_pairs(len(self.images), "images")


# --------------------------------------------------------------------------
# IDX


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc


def _names_path(reader):
    """Make validation errors raised while reading mention the file."""

    @functools.wraps(reader)
    def wrapper(path, *args, **kwargs):
        try:
            return reader(path, *args, **kwargs)
        except GMScoreError as exc:
            if str(path) not in str(exc):
                exc.args = (f"{path}: {exc}",)
            raise

    return wrapper


@_names_path
def read_idx_images(path, source_id: Optional[str] = None) -> ImageSet:
    """Read an IDX3 image file and scale pixels to [0, 1]."""
    raw = _read_bytes(path)
    if len(raw) < 16:
        raise FormatError(f"{path}: header truncated")
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"{path}: magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    expected = n * rows * cols
    if len(raw) - 16 != expected:
        raise FormatError(f"{path}: payload has {len(raw) - 16} bytes, header implies {expected}")
    if n == 0:
        raise EmptyInput(f"{path}: file holds zero images")
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(n, rows, cols)
    return ImageSet(pixels / 255.0, source_id if source_id is not None else Path(path).name)


@_names_path
def read_idx_labels(path, K: int = DEFAULT_CLASSES) -> LabelVector:
    """Read an IDX1 label file; every label must be below ``K``."""
    raw = _read_bytes(path)
    if len(raw) < 8:
        raise FormatError(f"{path}: header truncated")
    magic, n = struct.unpack(">II", raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(f"{path}: magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    if len(raw) - 8 != n:
        raise FormatError(f"{path}: payload has {len(raw) - 8} bytes, header implies {n}")
    return LabelVector(np.frombuffer(raw, dtype=np.uint8, offset=8).copy(), K)


def write_idx_images(path, images) -> None:
    """Write images (ImageSet, float array in [0,1] or uint8 array) as IDX3."""
    if isinstance(images, ImageSet):
        images = images.images
    arr = np.asarray(images)
    if arr.ndim != 3:
        raise FormatError("images must be (N, H, W)")
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    n, h, w = arr.shape
    Path(path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w) + arr.tobytes())


def write_idx_labels(path, labels) -> None:
    if isinstance(labels, LabelVector):
        labels = labels.labels
    arr = np.asarray(labels)
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise RangeError("IDX labels must fit in one unsigned byte")
    arr = arr.astype(np.uint8)
    Path(path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, arr.size) + arr.tobytes())


# --------------------------------------------------------------------------
# CSV / JSON


@_names_path
def read_probability_matrix(path, classifier_id: Optional[str] = None) -> ProbabilityMatrix:
    """Read a probability CSV and validate every row."""
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyInput(f"{path}: empty file") from None
    K = len(header)
    if header != [f"class_{i}" for i in range(K)]:
        raise FormatError(f"{path}: header must be class_0,...,class_{{K-1}}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != K:
            raise FormatError(f"{path}:{lineno}: {len(row)} fields, expected {K}")
        try:
            rows.append([float(v) for v in row])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise EmptyInput(f"{path}: no probability rows")
    if classifier_id is None:
        classifier_id = Path(path).stem
    return ProbabilityMatrix(np.array(rows), classifier_id)


def write_probability_matrix(path, probs) -> None:
    rows = probs.rows if isinstance(probs, ProbabilityMatrix) else np.asarray(probs)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"class_{i}" for i in range(rows.shape[1])])
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc


@_names_path
def read_class_counts(path) -> ClassCounts:
    doc = _load_json(path)
    if not isinstance(doc, dict) or "counts" not in doc:
        raise FormatError(f"{path}: expected an object with a 'counts' list")
    counts = doc["counts"]
    if not isinstance(counts, list) or not all(
        isinstance(c, int) and not isinstance(c, bool) for c in counts
    ):
        raise FormatError(f"{path}: counts must be a list of integers")
    return ClassCounts(np.array(counts, dtype=np.int64), str(doc.get("model_id", "")))


def write_class_counts(path, counts: ClassCounts) -> None:
    doc = {"model_id": counts.model_id, "counts": [int(c) for c in counts.counts]}
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


@_names_path
def read_labels(path, K: int = DEFAULT_CLASSES) -> LabelVector:
    """Read labels from IDX1, or from a text/CSV file holding one integer per line."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) >= 4 and struct.unpack(">I", raw[:4])[0] == IDX_LABELS_MAGIC:
        return read_idx_labels(path, K)
    values = []
    for line in raw.decode().splitlines():
        line = line.strip()
        if not line or line == "label":
            continue
        try:
            values.append(int(line))
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from exc
    return LabelVector(np.array(values, dtype=np.int64), K)


@_names_path
def read_sample_manifest(path, K: int = DEFAULT_CLASSES) -> SampleSet:
    """Resolve a sample-set manifest; relative paths are taken from its directory."""
    path = Path(path)
    doc = _load_json(path)
    if not isinstance(doc, dict) or "images" not in doc:
        raise FormatError(f"{path}: manifest needs 'images'")
    base = path.parent
    model_id = str(doc.get("model_id", path.stem))
    images = read_idx_images(base / doc["images"], source_id=model_id)
    labels = None
    if doc.get("labels") is not None:
        labels = read_labels(base / doc["labels"], K)
        try:
            labels.check_pairs(len(images), "images")
        except PairingError as exc:
            raise PairingError(f"{path}: {exc}") from None
    return SampleSet(model_id, images, labels, path)


def write_sample_manifest(path, model_id: str, images: str, labels: Optional[str]) -> None:
    doc = {"model_id": model_id, "images": images, "labels": labels}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def as_label_vector(labels, K: int) -> LabelVector:
    if isinstance(labels, LabelVector):
        return labels
    return LabelVector(np.asarray(labels), K)


def stack_label_vectors(vectors: Sequence[LabelVector]) -> np.ndarray:
    lengths = {len(v) for v in vectors}
    if len(lengths) > 1:
        raise PairingError(f"label vectors have differing lengths {sorted(lengths)}")
    return np.stack([v.labels for v in vectors])
