"""Dataset ingestion: feature tables, label files, splits, synthetics.

Features are precomputed vectors (any upstream extractor); this module
only defines the on-disk formats and a Gaussian-blob generator for
experiments.  Labels may be multi-valued; an item with m labels gets
proportion 1/m per class in its label-matrix column.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError

FEATURE_MAGIC = b"FHFT"
FEATURE_VERSION = 1


def label_matrix(label_sets, num_classes: int) -> np.ndarray:
    """Class-proportion matrix: column i has 1/m at each of item i's m labels."""
    y = np.zeros((num_classes, len(label_sets)))
    for i, labels in enumerate(label_sets):
        if not labels:
            raise DataError(f"item {i} has no labels")
        for c in labels:
            if not 0 <= c < num_classes:
                raise DataError(f"item {i}: class id {c} out of range for M={num_classes}")
            y[c, i] = 1.0 / len(labels)
    return y


def shares_label(a: frozenset, b: frozenset) -> bool:
    """Ground-truth similarity: the two label sets intersect."""
    return bool(a & b)


@dataclass
class Dataset:
    """In-memory dataset: dim x N features, label sets, index splits."""

    name: str
    features: np.ndarray
    label_sets: list
    num_classes: int
    splits: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DataError(f"features must be dim x N, got shape {self.features.shape}")
        if len(self.label_sets) != self.features.shape[1]:
            raise DataError(
                f"{len(self.label_sets)} label rows for {self.features.shape[1]} items"
            )
        self.label_sets = [frozenset(s) for s in self.label_sets]
        n = self.features.shape[1]
        for name, idx in self.splits.items():
            idx = np.asarray(idx, dtype=np.int64)
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise DataError(f"split {name!r} has out-of-range indices")
            self.splits[name] = idx
        train = set(self.splits.get("train", np.empty(0, dtype=np.int64)).tolist())
        query = set(self.splits.get("query", np.empty(0, dtype=np.int64)).tolist())
        if train & query:
            raise DataError("query and train splits must be disjoint")

    @property
    def input_dim(self) -> int:
        return self.features.shape[0]

    @property
    def n_items(self) -> int:
        return self.features.shape[1]

    def split(self, name: str) -> np.ndarray:
        if name not in self.splits:
            raise DataError(f"dataset {self.name!r} has no split {name!r}")
        return self.splits[name]

    def subset_labels(self, indices) -> list:
        return [self.label_sets[i] for i in indices]

    def y_matrix(self, indices=None) -> np.ndarray:
        sets = self.label_sets if indices is None else self.subset_labels(indices)
        return label_matrix(sets, self.num_classes)


def write_features(path, features: np.ndarray) -> None:
    """FHFT header then one f32 record of dim values per item."""
    features = np.asarray(features)
    if features.ndim != 2:
        raise DataError(f"features must be dim x N, got shape {features.shape}")
    dim, n = features.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(np.array([FEATURE_VERSION, dim, n], dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(features.T, dtype="<f4").tobytes())


def load_features(path, expected_dim: int | None = None, expected_n: int | None = None) -> np.ndarray:
    """Read a feature table back as float64, dim x N."""
    with open(path, "rb") as fh:
        if fh.read(4) != FEATURE_MAGIC:
            raise DataError(f"{path}: not a feature file")
        head = np.frombuffer(fh.read(12), dtype="<u4")
        if head.size != 3:
            raise DataError(f"{path}: truncated header")
        version, dim, n = (int(v) for v in head)
        if version != FEATURE_VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        if expected_dim is not None and dim != expected_dim:
            raise DataError(f"{path}: header dim {dim} != manifest dim {expected_dim}")
        if expected_n is not None and n != expected_n:
            raise DataError(f"{path}: header N {n} != manifest N {expected_n}")
        payload = fh.read()
    expected_bytes = dim * n * 4
    if len(payload) != expected_bytes:
        raise DataError(
            f"{path}: expected {expected_bytes} payload bytes, got {len(payload)}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(n, dim).T
    if not np.isfinite(values).all():
        raise DataError(f"{path}: non-finite feature values")
    return values.astype(np.float64)


def write_labels(path, label_sets) -> None:
    """One text line per item: 'index: c1 c2 ...'."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, labels in enumerate(label_sets):
            fh.write(f"{i}: " + " ".join(str(c) for c in sorted(labels)) + "\n")


def load_labels(path, num_classes: int, n_items: int):
    """Parse a label file; returns (label matrix, per-item label sets)."""
    sets: list = [None] * n_items
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            head, _, rest = line.partition(":")
            try:
                idx = int(head)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad item index {head!r}") from exc
            if not 0 <= idx < n_items:
                raise DataError(f"{path}:{lineno}: item index {idx} out of range")
            if sets[idx] is not None:
                raise DataError(f"{path}:{lineno}: duplicate labels for item {idx}")
            classes = rest.split()
            if not classes:
                raise DataError(f"{path}:{lineno}: empty label row for item {idx}")
            try:
                labels = frozenset(int(c) for c in classes)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad class id") from exc
            sets[idx] = labels
    missing = [i for i, s in enumerate(sets) if s is None]
    if missing:
        raise DataError(f"{path}: no labels for item {missing[0]}")
    return label_matrix(sets, num_classes), sets


@dataclass
class DatasetManifest:
    """JSON description tying feature/label files and splits together."""

    name: str
    feature_path: str
    label_path: str
    input_dim: int
    n_items: int
    num_classes: int
    splits: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "name": self.name,
            "feature_path": self.feature_path,
            "label_path": self.label_path,
            "input_dim": self.input_dim,
            "n_items": self.n_items,
            "num_classes": self.num_classes,
            "splits": {k: list(map(int, v)) for k, v in self.splits.items()},
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def save_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(manifest.to_json() + "\n", encoding="utf-8")


def load_manifest(path) -> DatasetManifest:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return DatasetManifest(
            name=payload["name"],
            feature_path=payload["feature_path"],
            label_path=payload["label_path"],
            input_dim=int(payload["input_dim"]),
            n_items=int(payload["n_items"]),
            num_classes=int(payload["num_classes"]),
            splits=payload.get("splits", {}),
        )
    except KeyError as exc:
        raise DataError(f"{path}: manifest missing key {exc}") from exc


def load_dataset(manifest: DatasetManifest, base_dir=None) -> Dataset:
    """Load features and labels referenced by a manifest."""
    base = Path(base_dir) if base_dir is not None else Path(".")
    feature_path = base / manifest.feature_path
    label_path = base / manifest.label_path
    for p in (feature_path, label_path):
        if not p.exists():
            raise DataError(f"dataset file not found: {p}")
    features = load_features(feature_path, manifest.input_dim, manifest.n_items)
    _, label_sets = load_labels(label_path, manifest.num_classes, manifest.n_items)
    return Dataset(
        name=manifest.name,
        features=features,
        label_sets=label_sets,
        num_classes=manifest.num_classes,
        splits=dict(manifest.splits),
    )


def make_synthetic(
    classes: int,
    per_class: int,
    dim: int,
    separation: float,
    seed: int,
    query_fraction: float = 0.1,
    name: str = "synthetic",
) -> Dataset:
    """Gaussian blobs: class means on a sphere of radius `separation`,
    unit isotropic noise.  Deterministic for a fixed seed.

    A query_fraction slice of every class is held out as the query
    split; the remainder is both database and training set.
    """
    if classes < 2:
        raise ValueError("need at least 2 classes")
    if not 0 <= query_fraction < 1:
        raise ValueError("query_fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(dim, classes))
    directions /= np.linalg.norm(directions, axis=0, keepdims=True)
    means = separation * directions
    n = classes * per_class
    labels = np.repeat(np.arange(classes), per_class)
    features = means[:, labels] + rng.normal(size=(dim, n))
    n_query = int(round(query_fraction * per_class))
    query, rest = [], []
    for c in range(classes):
        idx = np.nonzero(labels == c)[0]
        query.extend(idx[:n_query])
        rest.extend(idx[n_query:])
    splits = {
        "train": np.array(rest, dtype=np.int64),
        "database": np.array(rest, dtype=np.int64),
        "query": np.array(query, dtype=np.int64),
    }
    return Dataset(
        name=name,
        features=features,
        label_sets=[frozenset({int(c)}) for c in labels],
        num_classes=classes,
        splits=splits,
    )
