"""Dataset ingestion, splits, and the two batching regimes.

The batching distinction matters for privacy accounting: reshuffled batches
("rf") are disjoint within an epoch, while sampled batches ("rs") include
each example independently with probability q.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DomainError, ParseError

CANCER_FEATURES = 9
CANCER_FEATURE_SCALE = 10.0  # features are integer-valued 1..10


@dataclass
class Dataset:
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray    # (n,) int64
    name: str = ""
    normalization: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise DomainError("features must be (n, d) with one label per row")
        if not np.all(np.isfinite(self.features)):
            raise DomainError("features contain non-finite values")
        if len(self.labels) and self.labels.min() < 0:
            raise DomainError("labels must be nonnegative class ids")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def subset(self, indices: np.ndarray, name: Optional[str] = None) -> "Dataset":
        return Dataset(
            self.features[indices],
            self.labels[indices],
            name=name if name is not None else self.name,
            normalization=dict(self.normalization),
        )


@dataclass(frozen=True)
class BatchPlan:
    mode: str            # "rf" or "rs"
    batch_size: Optional[int] = None  # rf
    q: Optional[float] = None         # rs
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("rf", "rs"):
            raise DomainError(f"batching mode must be 'rf' or 'rs', got {self.mode!r}")
        if self.mode == "rf" and (self.batch_size is None or self.batch_size < 1):
            raise DomainError("rf batching requires a positive batch_size")
        if self.mode == "rs" and (self.q is None or not 0.0 < self.q < 1.0):
            raise DomainError("rs batching requires q in (0, 1)")


def load_cancer_csv(path: str) -> Dataset:
    """Load a file in the Wisconsin breast-cancer (original) format.

    Eleven comma-separated columns: sample id, nine integer features valued
    1..10, and a class label (2 = benign, 4 = malignant).  Missing values are
    marked '?'.  Rows with any missing value are dropped, the id column is
    discarded, classes map to 0/1, and features are scaled to (0, 1] by the
    fixed constant 10 (data-independent, so preprocessing leaks nothing).
    """
    features: List[List[float]] = []
    labels: List[int] = []
    total_rows = 0
    dropped = 0
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            total_rows += 1
            parts = line.split(",")
            if len(parts) != 11:
                raise ParseError(f"expected 11 comma-separated fields, got {len(parts)}", line=lineno)
            if "?" in parts[1:10]:
                dropped += 1
                continue
            try:
                values = [int(p) for p in parts[1:10]]
                cls = int(parts[10])
            except ValueError as exc:
                raise ParseError(f"non-integer field ({exc})", line=lineno) from exc
            if any(v < 1 or v > 10 for v in values):
                raise ParseError("feature values must lie in 1..10", line=lineno)
            if cls not in (2, 4):
                raise ParseError(f"class must be 2 or 4, got {cls}", line=lineno)
            features.append([v / CANCER_FEATURE_SCALE for v in values])
            labels.append(0 if cls == 2 else 1)
    if not features:
        raise ParseError(f"no usable rows in {path}")
    return Dataset(
        np.array(features),
        np.array(labels),
        name="cancer",
        normalization={
            "scale": CANCER_FEATURE_SCALE,
            "source_rows": total_rows,
            "dropped_missing": dropped,
        },
    )


def train_test_split(dataset: Dataset, n_train: int, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then first ``n_train`` rows train / remainder test."""
    if not 0 < n_train < len(dataset):
        raise DomainError(f"n_train must lie strictly between 0 and {len(dataset)}")
    perm = np.random.default_rng(seed).permutation(len(dataset))
    return (
        dataset.subset(perm[:n_train], name=dataset.name + ":train"),
        dataset.subset(perm[n_train:], name=dataset.name + ":test"),
    )


def rf_batches(n: int, batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    """One epoch of reshuffled batches: a fresh permutation split into
    ceil(n / batch_size) disjoint batches covering every index once."""
    if batch_size < 1 or batch_size > n:
        raise DomainError(f"batch_size must lie in 1..{n}, got {batch_size}")
    perm = rng.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def rs_batch(n: int, q: float, rng: np.random.Generator) -> np.ndarray:
    """Independently include each index with probability q."""
    if not 0.0 < q < 1.0:
        raise DomainError(f"q must lie in (0, 1), got {q}")
    return np.flatnonzero(rng.random(n) < q)


def synth_blobs(
    n: int,
    d: int,
    n_classes: int,
    seed: int,
    separation: float = 4.0,
    spread: float = 1.0,
) -> Dataset:
    """Deterministic Gaussian-blob classification data for fast tests."""
    if n < 1:
        raise DomainError(f"need at least one example, got n={n}")
    if d < 1 or n_classes < 2:
        raise DomainError("need d >= 1 and at least two classes")
    rng = np.random.default_rng(seed)
    # axis-aligned centers with alternating sign: pairwise distance is at
    # least separation regardless of the seed
    centers = np.zeros((n_classes, d))
    for c in range(n_classes):
        centers[c, (c // 2) % d] = separation * (-1.0 if c % 2 else 1.0)
    labels = np.arange(n) % n_classes
    features = centers[labels] + rng.normal(0.0, spread, size=(n, d))
    perm = rng.permutation(n)
    return Dataset(features[perm], labels[perm], name=f"blobs-{n}x{d}")
