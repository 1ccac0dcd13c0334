"""Dataset loading, label encoding, standardization, folds, synthetic data."""

import csv
from dataclasses import dataclass, field

import numpy as np

from mrccg.errors import DataError


@dataclass
class Dataset:
    """A design matrix with integer-encoded labels.

    labels are 0..n_classes-1; label_values maps the encoded label back to
    the value found in the source file (ascending order of original values).
    """

    instances: np.ndarray
    labels: np.ndarray
    n_classes: int
    feature_names: list | None = None
    label_values: list | None = None

    def __post_init__(self):
        self.instances = np.ascontiguousarray(self.instances, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.instances.ndim != 2:
            raise DataError("instances must be a 2-d array")
        if self.labels.shape != (self.instances.shape[0],):
            raise DataError("labels must be 1-d with one entry per instance")
        if self.n_classes < 2:
            raise DataError("need at least two classes")
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= self.n_classes):
            raise DataError("labels out of range for n_classes")
        if not np.all(np.isfinite(self.instances)):
            raise DataError("instances contain non-finite values")

    @property
    def n(self):
        return self.instances.shape[0]

    @property
    def d(self):
        return self.instances.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.instances[idx], self.labels[idx], self.n_classes,
                       self.feature_names, self.label_values)


@dataclass
class ScalerParams:
    """Per-column affine transform fitted by `standardize`.

    std holds 1.0 for degenerate (constant) columns; the degenerate mask
    records which ones, so apply/invert round-trips exactly.
    """

    mean: np.ndarray
    std: np.ndarray
    degenerate: np.ndarray = field(default=None)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.degenerate is None:
            self.degenerate = np.zeros(self.mean.shape[0], dtype=bool)
        else:
            self.degenerate = np.asarray(self.degenerate, dtype=bool)
        if np.any(self.std <= 0):
            raise DataError("scaler std must be positive")


def load_csv(path, label_column, header=True, delimiter=","):
    """Load a delimited text file into a Dataset.

    label_column is a column name (requires header=True) or a 0-based column
    index. Labels are re-encoded to 0..K-1 in ascending order of the original
    values; every other cell must parse as a float. Errors carry the 1-based
    file row number.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path}: empty file")

    names = None
    start = 0
    if header:
        names = [c.strip() for c in rows[0]]
        start = 1
        if start >= len(rows):
            raise DataError(f"{path}: no data rows after header")

    ncol = len(rows[start])
    if isinstance(label_column, str):
        if names is None:
            raise DataError("label column given by name but file has no header")
        try:
            label_idx = names.index(label_column)
        except ValueError:
            raise DataError(f"label column {label_column!r} not found in header") from None
    else:
        label_idx = int(label_column)
        if label_idx < 0:
            label_idx += ncol
        if not 0 <= label_idx < ncol:
            raise DataError(f"label column index {label_column} out of range")

    feats = []
    raw_labels = []
    for rix in range(start, len(rows)):
        row = rows[rix]
        fileno = rix + 1
        if len(row) != ncol:
            raise DataError(
                f"{path}: row {fileno} has {len(row)} fields, expected {ncol}")
        vals = []
        for cix, cell in enumerate(row):
            if cix == label_idx:
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataError(
                    f"{path}: row {fileno}, column {cix}: "
                    f"cannot parse {cell.strip()!r} as a number") from None
        feats.append(vals)
        raw_labels.append(row[label_idx].strip())

    X = np.asarray(feats, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        bad = np.argwhere(~np.isfinite(X))[0]
        raise DataError(f"{path}: non-finite value at data row {bad[0] + 1}")

    # Label order: numeric ascending when every label parses as a number,
    # lexicographic otherwise.
    try:
        keyed = sorted(set(raw_labels), key=float)
    except ValueError:
        keyed = sorted(set(raw_labels))
    if len(keyed) < 2:
        raise DataError(f"{path}: only one distinct label value")
    code = {v: i for i, v in enumerate(keyed)}
    y = np.array([code[v] for v in raw_labels], dtype=np.int64)
    try:
        keyed = [int(v) for v in keyed]
    except ValueError:
        pass

    feature_names = None
    if names is not None:
        feature_names = [c for i, c in enumerate(names) if i != label_idx]
    return Dataset(X, y, len(keyed), feature_names, keyed)


def standardize(data):
    """Center and scale columns to zero mean, unit std (population variance).

    Constant columns map to zero. Returns the transformed Dataset and the
    fitted ScalerParams.
    """
    mean = data.instances.mean(axis=0)
    std = data.instances.std(axis=0)
    degenerate = std < 1e-12
    safe = np.where(degenerate, 1.0, std)
    Z = (data.instances - mean) / safe
    Z[:, degenerate] = 0.0
    out = Dataset(Z, data.labels, data.n_classes, data.feature_names,
                  data.label_values)
    return out, ScalerParams(mean, safe, degenerate)


def apply_scaler(X, scaler):
    X = np.asarray(X, dtype=np.float64)
    Z = (X - scaler.mean) / scaler.std
    if Z.ndim == 1:
        Z = np.where(scaler.degenerate, 0.0, Z)
    else:
        Z[:, scaler.degenerate] = 0.0
    return Z


def invert_scaler(Z, scaler):
    return np.asarray(Z, dtype=np.float64) * scaler.std + scaler.mean


def stratified_kfold(data, k, seed=0):
    """Deterministic stratified k-fold split.

    Returns k (train_idx, test_idx) pairs, each index array sorted. Per-class
    membership counts across folds differ by at most one; classes smaller
    than k simply appear in fewer folds.
    """
    if k < 2:
        raise DataError("need at least 2 folds")
    if k > data.n:
        raise DataError(f"cannot split {data.n} instances into {k} folds")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(data.n, dtype=np.int64)
    offset = 0
    for y in range(data.n_classes):
        idx = np.nonzero(data.labels == y)[0]
        idx = rng.permutation(idx)
        for t, i in enumerate(idx):
            fold_of[i] = (t + offset) % k
        offset = (offset + idx.size) % k
    splits = []
    for f in range(k):
        test = np.nonzero(fold_of == f)[0]
        train = np.nonzero(fold_of != f)[0]
        splits.append((train, test))
    return splits


def synthetic_gaussian(n, d, n_classes=2, informative=None, separation=1.0,
                       seed=0):
    """Class-conditional Gaussian blobs with a controlled informative block.

    Class centers differ only in the first `informative` coordinates; center
    offsets are drawn N(0, separation^2 / informative) per coordinate, so the
    expected squared distance between two centers is 2 * separation^2.
    separation=0 gives identical classes. Class sizes differ by at most one.
    """
    if n_classes < 2:
        raise DataError("need at least two classes")
    if n < n_classes:
        raise DataError("need at least one instance per class")
    if informative is None:
        informative = d
    if not 1 <= informative <= d:
        raise DataError("informative must be in [1, d]")
    if separation < 0:
        raise DataError("separation must be nonnegative")
    rng = np.random.default_rng(seed)
    centers = np.zeros((n_classes, d))
    centers[:, :informative] = (separation / np.sqrt(informative)
                                * rng.standard_normal((n_classes, informative)))
    labels = rng.permutation(np.arange(n) % n_classes)
    X = centers[labels] + rng.standard_normal((n, d))
    return Dataset(X, labels, n_classes)
