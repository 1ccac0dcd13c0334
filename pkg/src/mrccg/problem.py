"""Moment estimates and the constraint row system of the minimax LP.

The uncertainty set is defined by the sample mean tau of phi(x_i, y_i) and a
box halfwidth lam proportional to the per-feature standard deviation. The LP
has one inequality row per (training instance, nonempty label subset C):

    sum_{y in C} phi(x_i, y) . mu / |C|  -  nu  <=  1/|C| - 1

Rows are ordered instance-major, subsets by bitmask 1 .. 2^K - 1. Columns are
only ever materialized for a requested feature subset J.
"""

from dataclasses import dataclass

import numpy as np

from mrccg import featmap as fm
from mrccg.backend import get_kernels
from mrccg.errors import DataError

MAX_CLASSES = 16


@dataclass
class MomentStats:
    """Sample moments of the feature map on a training set.

    lam uses the population standard deviation scaled by lambda_scale/sqrt(n);
    deterministic features get lam = 0 and are pinned to their sample mean.
    """

    tau: np.ndarray
    s: np.ndarray
    lam: np.ndarray
    lambda_scale: float
    n: int

    @property
    def m(self):
        return self.tau.shape[0]


def estimate_moments(data, fmap, lambda_scale=1.0):
    """Estimate tau, s and lam for `data` under the feature map."""
    if fmap.n_classes != data.n_classes:
        raise DataError("feature map and dataset disagree on the class count")
    if lambda_scale < 0:
        raise DataError("lambda_scale must be nonnegative")
    psi_x = fm.psi(fmap.instance_map, data.instances)
    n = data.n
    dp = fmap.dprime
    tau = np.zeros(fmap.m)
    second = np.zeros(fmap.m)
    for y in range(fmap.n_classes):
        rows = psi_x[data.labels == y]
        if rows.size:
            tau[y * dp:(y + 1) * dp] = rows.sum(axis=0) / n
            second[y * dp:(y + 1) * dp] = (rows * rows).sum(axis=0) / n
    s = np.sqrt(np.maximum(second - tau * tau, 0.0))
    lam = lambda_scale * s / np.sqrt(n)
    return MomentStats(tau, s, lam, float(lambda_scale), n)


class ConstraintSystem:
    """Row-side data of the LP: embedding cache, subset weights, rhs."""

    def __init__(self, psi_cache, n_classes):
        psi_cache = np.ascontiguousarray(psi_cache, dtype=np.float64)
        if psi_cache.ndim != 2:
            raise DataError("psi cache must be 2-d")
        if not 2 <= n_classes <= MAX_CLASSES:
            raise DataError(
                f"n_classes must be in [2, {MAX_CLASSES}]: the row count grows "
                f"as n * (2^K - 1)")
        self.psi = psi_cache
        self.n_classes = int(n_classes)
        self.n = psi_cache.shape[0]
        self.dprime = psi_cache.shape[1]
        self.n_subsets = (1 << self.n_classes) - 1

        sizes = np.empty(self.n_subsets, dtype=np.int64)
        weights = np.zeros((self.n_classes, self.n_subsets))
        for mask in range(1, self.n_subsets + 1):
            size = bin(mask).count("1")
            sizes[mask - 1] = size
            for y in range(self.n_classes):
                if (mask >> y) & 1:
                    weights[y, mask - 1] = 1.0 / size
        self.subset_sizes = sizes
        self.weights = weights
        self.b = np.tile(1.0 / sizes - 1.0, self.n)

    @property
    def n_rows(self):
        return self.n * self.n_subsets

    def row_pair(self, r):
        """Decode row r into (instance index, subset bitmask)."""
        if not 0 <= r < self.n_rows:
            raise ValueError("row index out of range")
        return r // self.n_subsets, r % self.n_subsets + 1


def build_constraints(data, fmap):
    """Embed all training instances and set up the row system."""
    if fmap.n_classes != data.n_classes:
        raise DataError("feature map and dataset disagree on the class count")
    return ConstraintSystem(fm.psi(fmap.instance_map, data.instances),
                            fmap.n_classes)


def _validate_features(cs, J):
    J = np.asarray(J, dtype=np.int64)
    if J.ndim != 1 or J.size == 0:
        raise ValueError("feature subset must be a nonempty 1-d index array")
    if J.min() < 0 or J.max() >= cs.dprime * cs.n_classes:
        raise ValueError("feature index out of range")
    if np.unique(J).size != J.size:
        raise ValueError("duplicate feature indices")
    return J


def columns(cs, J, kernels=None):
    """Materialize the (n_rows, |J|) constraint columns for features J."""
    J = _validate_features(cs, J)
    kern = kernels if kernels is not None else get_kernels()
    return kern.build_columns(cs.psi, J // cs.dprime, J % cs.dprime,
                              cs.weights)


def ft_alpha(cs, alpha, kernels=None):
    """F^T alpha over all m features, alpha given dense or as (rows, vals)."""
    kern = kernels if kernels is not None else get_kernels()
    if isinstance(alpha, tuple):
        rows, vals = alpha
        rows = np.asarray(rows, dtype=np.int64)
        vals = np.ascontiguousarray(vals, dtype=np.float64)
    else:
        alpha = np.asarray(alpha, dtype=np.float64)
        if alpha.shape != (cs.n_rows,):
            raise ValueError("dense alpha must have one entry per row")
        rows = np.nonzero(alpha)[0]
        vals = np.ascontiguousarray(alpha[rows])
    if rows.size and (rows.min() < 0 or rows.max() >= cs.n_rows):
        raise ValueError("row index out of range")
    return kern.accumulate_dual_image(cs.psi, rows // cs.n_subsets,
                                      rows % cs.n_subsets + 1, vals,
                                      cs.subset_sizes, cs.n_classes)
