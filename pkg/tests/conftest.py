"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the package's kernel code paths: the
dense constraint matrix is assembled from per-instance feature vectors and
explicit subset enumeration, and small LPs are solved by brute-force vertex
enumeration, so solver results are checked against genuinely independent
arithmetic.
"""

import itertools

import numpy as np
import pytest

from mrccg import datasets, featmap, problem


def make_instance(seed, n=None, d=None, n_classes=None):
    """Random small training problem: (data, fmap, stats, cs)."""
    rng = np.random.default_rng(seed)
    n = n if n is not None else int(rng.integers(4, 16))
    d = d if d is not None else int(rng.integers(2, 10))
    n_classes = n_classes if n_classes is not None else int(rng.integers(2, 4))
    data = datasets.synthetic_gaussian(
        n, d, n_classes, informative=int(rng.integers(1, d + 1)),
        separation=float(rng.uniform(0.0, 3.0)), seed=int(rng.integers(1 << 30)))
    fmap = featmap.FeatureMap(featmap.identity_map(d), n_classes)
    stats = problem.estimate_moments(data, fmap,
                                     lambda_scale=float(rng.uniform(0.3, 1.5)))
    cs = problem.build_constraints(data, fmap)
    return data, fmap, stats, cs


def label_subsets(n_classes):
    """Nonempty label subsets in bitmask order 1 .. 2^K - 1."""
    out = []
    for mask in range(1, 1 << n_classes):
        out.append([y for y in range(n_classes) if (mask >> y) & 1])
    return out


def dense_constraints(data, fmap):
    """(F_dense, b) over ALL m features, built from phi() and itertools.

    Independent of problem.ConstraintSystem and the kernel backends.
    """
    subsets = label_subsets(data.n_classes)
    rows_f = []
    rows_b = []
    for i in range(data.n):
        for C in subsets:
            g = np.zeros(fmap.m)
            for y in C:
                g += featmap.phi(fmap, data.instances[i], y).to_dense()
            rows_f.append(g / len(C))
            rows_b.append(1.0 / len(C) - 1.0)
    return np.asarray(rows_f), np.asarray(rows_b)


def vertex_enum_solve(F, b, tau, lam, feas_tol=1e-9):
    """Minimum of the subproblem LP by brute-force vertex enumeration.

    Variables (mu1, mu2, nu); constraints F(mu1 - mu2) - nu <= b and
    mu1, mu2 >= 0. Every vertex is the solution of n_var active constraints;
    enumerate all combinations, keep feasible ones, return the best value
    and its point. Exponential, so keep the inputs tiny.
    """
    S, k = F.shape
    nvar = 2 * k + 1
    A = np.zeros((S + 2 * k, nvar))
    rhs = np.zeros(S + 2 * k)
    A[:S, :k] = F
    A[:S, k:2 * k] = -F
    A[:S, 2 * k] = -1.0
    rhs[:S] = b
    A[S:S + k, :k] = -np.eye(k)
    A[S + k:, k:2 * k] = -np.eye(k)
    c = np.concatenate([-(tau - lam), tau + lam, [1.0]])

    best = np.inf
    best_pt = None
    for combo in itertools.combinations(range(S + 2 * k), nvar):
        Aact = A[list(combo)]
        try:
            v = np.linalg.solve(Aact, rhs[list(combo)])
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(v)):
            continue
        if np.max(np.abs(Aact @ v - rhs[list(combo)])) > 1e-7:
            continue
        if np.max(A @ v - rhs) > feas_tol:
            continue
        val = float(c @ v)
        if val < best:
            best = val
            best_pt = v
    assert best_pt is not None, "vertex enumeration found no feasible vertex"
    return best, best_pt


def scipy_solve(F, b, tau, lam):
    """Reference solve via scipy linprog (HiGHS): (objective, duals)."""
    from scipy.optimize import linprog

    S, k = F.shape
    c = np.concatenate([-(tau - lam), tau + lam, [1.0]])
    A_ub = np.hstack([F, -F, -np.ones((S, 1))])
    bounds = [(0, None)] * (2 * k) + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b, bounds=bounds, method="highs")
    assert res.status == 0, f"scipy linprog failed: {res.message}"
    return float(res.fun), -np.asarray(res.ineqlin.marginals)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
