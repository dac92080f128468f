"""Dataset ingestion, standardization, and seeded stratified splits.

CSV files are comma-separated UTF-8 with a header row and `.` decimals.
Splits use numpy's default PCG64 generator, so a (seed, sizes) pair pins
every index set; the test block is drawn before the train and validation
blocks, each stratified per class with largest-remainder rounding.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

from .errors import (
    ConstantColumnWarning,
    DegenerateClassWarning,
    DimensionMismatch,
    InsufficientSamples,
    MissingLabelColumn,
    ParseError,
    SingleClassData,
)


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with +-1 labels and optional bookkeeping.

    `standardization` holds the (means, stds) that produced the current
    feature values, so held-out data can be mapped through the same
    transform; it is None for raw data.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: Optional[tuple] = None
    standardization: Optional[tuple] = None

    def __post_init__(self):
        features = np.atleast_2d(np.asarray(self.features, dtype=float))
        labels = np.asarray(self.labels, dtype=float).ravel()
        if features.shape[0] != labels.shape[0]:
            raise DimensionMismatch("feature rows and labels differ in length")
        if not np.isfinite(features).all():
            raise ParseError("features contain non-finite values")
        if not np.isin(labels, (-1.0, 1.0)).all():
            raise ParseError("labels must be +-1")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        if self.feature_names is not None:
            names = tuple(str(n) for n in self.feature_names)
            if len(names) != features.shape[1]:
                raise DimensionMismatch(
                    "feature names do not match the feature count")
            object.__setattr__(self, "feature_names", names)

    @property
    def num_points(self):
        return self.features.shape[0]

    @property
    def num_features(self):
        return self.features.shape[1]

    def subset(self, indices):
        """The dataset restricted to the given rows, bookkeeping intact."""
        idx = np.asarray(indices, dtype=int).ravel()
        return LabeledDataset(self.features[idx], self.labels[idx],
                              feature_names=self.feature_names,
                              standardization=self.standardization)


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint train/validation/test index sets for one seeded draw."""

    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    seed: int

    def __post_init__(self):
        for name in ("train_idx", "val_idx", "test_idx"):
            arr = np.asarray(getattr(self, name), dtype=int).ravel()
            object.__setattr__(self, name, arr)
        total = np.concatenate([self.train_idx, self.val_idx, self.test_idx])
        if np.unique(total).size != total.size:
            raise InsufficientSamples("split parts overlap")

    @property
    def sizes(self):
        return (self.train_idx.size, self.val_idx.size, self.test_idx.size)

    def to_json(self):
        return json.dumps({"seed": int(self.seed),
                           "train_idx": self.train_idx.tolist(),
                           "val_idx": self.val_idx.tolist(),
                           "test_idx": self.test_idx.tolist()})

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        return cls(train_idx=raw["train_idx"], val_idx=raw["val_idx"],
                   test_idx=raw["test_idx"], seed=int(raw["seed"]))


def load_csv(path, label_column, positive_label):
    """Read a labeled dataset from a CSV file.

    The label column is matched to `positive_label` by string equality
    after stripping; everything else maps to -1. Exact duplicate
    (feature row, label) pairs keep their first occurrence only.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if label_column not in header:
            raise MissingLabelColumn(
                f"{path}: no column named {label_column!r} in header")
        label_pos = header.index(label_column)
        feature_names = tuple(h for i, h in enumerate(header)
                              if i != label_pos)
        rows, labels, seen = [], [], set()
        for line_no, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != len(header):
                raise ParseError(
                    f"{path}: row {line_no} has {len(cells)} cells, "
                    f"expected {len(header)}")
            values = []
            for i, cell in enumerate(cells):
                if i == label_pos:
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"{path}: row {line_no}, column {header[i]!r}: "
                        f"cannot parse {cell.strip()!r}") from None
            label = 1.0 if cells[label_pos].strip() == positive_label else -1.0
            key = (tuple(values), label)
            if key in seen:
                continue
            seen.add(key)
            rows.append(values)
            labels.append(label)
    if len(rows) < 2:
        raise InsufficientSamples(
            f"{path}: {len(rows)} usable rows, need at least 2")
    labels = np.array(labels)
    if np.all(labels == labels[0]):
        raise SingleClassData(f"{path}: every label maps to one class")
    return LabeledDataset(np.array(rows), labels, feature_names=feature_names)


def write_csv(path, data, label_column="label"):
    """Write a dataset as CSV; labels appear as the integers 1 and -1."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        names = data.feature_names or tuple(
            f"x{j}" for j in range(data.num_features))
        writer.writerow(list(names) + [label_column])
        for row, label in zip(data.features, data.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def load_bundled(name="cancer"):
    """Load a dataset shipped with the package.

    "cancer" is the Wisconsin Diagnostic Breast Cancer data reduced to its
    nine mean-value cytology features; malignant maps to +1.
    """
    source = resources.files("pbtune").joinpath(f"datasets/{name}.csv")
    with resources.as_file(source) as path:
        return load_csv(path, label_column="diagnosis",
                        positive_label="malignant")


def standardize(data, stats=None):
    """Center each feature and scale it to unit sample variance.

    With `stats=(means, stds)` the given statistics are applied instead
    (held-out data transformed with training-set numbers). Zero-variance
    columns become all zeros and raise ConstantColumnWarning; the applied
    statistics are recorded on the result.
    """
    x = data.features
    if stats is None:
        if data.num_points < 2:
            raise InsufficientSamples(
                "standardization needs at least 2 rows")
        means = x.mean(axis=0)
        stds = x.std(axis=0, ddof=1)
    else:
        means = np.asarray(stats[0], dtype=float).ravel()
        stds = np.asarray(stats[1], dtype=float).ravel()
        if means.shape[0] != data.num_features or stds.shape != means.shape:
            raise DimensionMismatch(
                "statistics do not match the feature count")
    constant = stds == 0.0
    if constant.any():
        cols = np.flatnonzero(constant).tolist()
        warnings.warn(f"zero-variance feature columns {cols} mapped to zeros",
                      ConstantColumnWarning, stacklevel=2)
    safe = np.where(constant, 1.0, stds)
    out = (x - means) / safe
    out[:, constant] = 0.0
    return LabeledDataset(out, data.labels,
                          feature_names=data.feature_names,
                          standardization=(means.copy(), stds.copy()))


def _largest_remainder(target, proportions, pools):
    """Integer per-class allocation of `target` by largest remainder.

    Quotas follow `proportions`; classes are capped at their pool sizes
    and overflow moves to the classes with the most room left.
    """
    quotas = target * proportions
    alloc = np.floor(quotas).astype(int)
    np.minimum(alloc, pools, out=alloc)
    remainders = quotas - alloc
    # Largest fractional part first; class order breaks exact ties.
    order = np.lexsort((np.arange(len(pools)), -remainders))
    for k in order:
        if alloc.sum() >= target:
            break
        if alloc[k] < pools[k]:
            alloc[k] += 1
    while alloc.sum() < target:
        room = pools - alloc
        if room.max() <= 0:
            raise InsufficientSamples("class pools exhausted mid-allocation")
        alloc[int(np.argmax(room))] += 1
    return alloc


def stratified_split(data, sizes, test_fraction=0.5, seed=0):
    """Seeded class-stratified split into test, then train, then validation.

    The test block takes ceil(test_fraction * n) rows; train and
    validation then draw `sizes` = (train, validation) rows from the
    remainder. Every block's class counts track the full dataset's
    proportions to within one sample per class.
    """
    n_train, n_val = int(sizes[0]), int(sizes[1])
    if n_train < 1 or n_val < 1:
        raise InsufficientSamples("train and validation must be nonempty")
    n = data.num_points
    n_test = math.ceil(test_fraction * n)
    if n_train + n_val + n_test > n:
        raise InsufficientSamples(
            f"requested {n_train}+{n_val}+{n_test} rows, have {n}")
    labels = data.labels
    classes = np.unique(labels)
    proportions = np.array([(labels == c).sum() / n for c in classes])
    rng = np.random.default_rng(seed)
    queues = [rng.permutation(np.flatnonzero(labels == c)) for c in classes]
    heads = np.zeros(len(classes), dtype=int)

    parts = {}
    for part, want in (("test", n_test), ("train", n_train),
                       ("validation", n_val)):
        pools = np.array([q.size - h for q, h in zip(queues, heads)])
        alloc = _largest_remainder(want, proportions, pools)
        taken = []
        for k, count in enumerate(alloc):
            taken.append(queues[k][heads[k]:heads[k] + count])
            heads[k] += count
        idx = np.sort(np.concatenate(taken))
        if len(classes) > 1 and want > 0 and (alloc > 0).sum() < 2:
            warnings.warn(f"{part} split holds a single class",
                          DegenerateClassWarning, stacklevel=2)
        parts[part] = idx
    return SplitSpec(train_idx=parts["train"], val_idx=parts["validation"],
                     test_idx=parts["test"], seed=int(seed))
