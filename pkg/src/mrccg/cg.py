"""Constraint generation over the minimax LP.

Instead of solving the LP over all m = d' * K features, train() iterates:
solve the subproblem restricted to a working feature set, read off the dual
vector, and re-select the working set by dual constraint violation (drop
features whose dual constraint is strictly slack, add the worst violators).
Each worst-case error probability R^k is a valid bound for the uncertainty
set restricted to the working set, the sequence is nonincreasing, and with
violation threshold epsilon it lands within epsilon * ||mu*||_1 of the
full-feature optimum.
"""

import os
from dataclasses import dataclass, field, asdict

import numpy as np

from mrccg import problem as pb
from mrccg.backend import get_kernels
from mrccg.classifier import MrcModel
from mrccg.errors import NumericalError
from mrccg.lp import (SimplexSolver, assemble_subproblem, dump_lp,
                      solution_coefficients, solve_timed, warm_start_from,
                      STATUS_OPTIMAL)

# Objective equality required of a warm start against the previous solve.
WARM_OBJ_TOL = 1e-10
# Allowed uphill movement of R^k before we call it a bug.
MONOTONE_TOL = 1e-9


@dataclass
class CgConfig:
    """Knobs of the constraint generation loop.

    epsilon is the minimum dual violation worth adding a feature for, n_max
    caps how many enter per iteration, k_max caps the subproblem solves
    beyond the first. init_size controls the moment-screened starting set
    (defaults to n_max). lambda_scale rescales the uncertainty box
    halfwidth. backend picks the kernel implementation by name.
    """

    epsilon: float = 1e-4
    n_max: int = 100
    k_max: int = 10
    init_size: int = None
    active_tol: float = 1e-8
    lambda_scale: float = 1.0
    seed: int = 0
    backend: str = None
    verify: bool = True
    max_lp_iter: int = None
    dump_dir: str = None

    def validate(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if self.init_size is not None and self.init_size < 1:
            raise ValueError("init_size must be at least 1")
        if self.active_tol < 0:
            raise ValueError("active_tol must be nonnegative")
        if self.lambda_scale < 0:
            raise ValueError("lambda_scale must be nonnegative")

    def public_dict(self):
        out = asdict(self)
        out.pop("dump_dir")
        return out


@dataclass
class IterationRecord:
    k: int
    r: float
    n_features: int
    added: int
    removed: int
    pivots: int
    solve_ms: float
    warm_obj: float = float("nan")


@dataclass
class CgTrace:
    records: list = field(default_factory=list)

    def append(self, rec):
        self.records.append(rec)

    @property
    def r_values(self):
        return np.array([rec.r for rec in self.records])

    @property
    def n_iterations(self):
        return len(self.records)

    @property
    def final(self):
        return self.records[-1]

    def monotone_violation(self):
        """Largest uphill step between consecutive R values (0 if none)."""
        r = self.r_values
        if r.size < 2:
            return 0.0
        return float(max(np.diff(r).max(), 0.0))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("k,R_k,n_features,added,removed,solve_ms,pivots\n")
            for rec in self.records:
                fh.write(f"{rec.k},{rec.r:.17g},{rec.n_features},"
                         f"{rec.added},{rec.removed},{rec.solve_ms:.3f},"
                         f"{rec.pivots}\n")


def initial_features(stats, size):
    """Moment-screened starting set: the `size` largest |tau_j| - lam_j.

    Features whose mean dominates the box halfwidth force a nonzero dual
    image, so they are the cheapest guess at the eventual support. Ties
    break toward the lower index; the result is sorted ascending.
    """
    size = int(min(size, stats.m))
    if size < 1:
        raise ValueError("size must be at least 1")
    score = np.abs(stats.tau) - stats.lam
    order = np.lexsort((np.arange(stats.m), -score))
    return np.sort(order[:size])


def select(cs, stats, alpha, current, epsilon, n_max, active_tol=1e-8,
           kernels=None):
    """Next working set from the dual vector of the current subproblem.

    v = |F^T alpha - tau| - lam measures dual constraint violation over all
    m features. Features of the current set stay iff v >= -active_tol (their
    constraint is active); outside features enter by decreasing v, at most
    n_max of them, only while v > epsilon. The dual must satisfy the current
    set's constraints to active_tol; anything worse is a solver bug.
    """
    current = np.asarray(current, dtype=np.int64)
    v = np.abs(pb.ft_alpha(cs, alpha, kernels=kernels) - stats.tau) - stats.lam
    on_active = v[current]
    if on_active.max(initial=-np.inf) > active_tol:
        raise NumericalError(
            f"dual violates an active-set constraint by {on_active.max():.3e}")
    keep = current[on_active >= -active_tol]

    cand = np.nonzero(v > epsilon)[0]
    if cand.size > n_max:
        order = np.lexsort((cand, -v[cand]))
        cand = cand[order[:n_max]]
    return np.union1d(keep, cand)


def _sparse_alpha(sol):
    rows = np.nonzero(sol.alpha > 0.0)[0]
    return rows, np.ascontiguousarray(sol.alpha[rows])


def _require_optimal(sol, k):
    if sol.status != STATUS_OPTIMAL:
        raise NumericalError(
            f"subproblem {k} ended with status {sol.status!r} "
            f"after {sol.pivots} pivots")


def _check_r_range(r, n_classes):
    hi = 1.0 - 1.0 / n_classes
    if not -MONOTONE_TOL <= r <= hi + MONOTONE_TOL:
        raise NumericalError(
            f"worst-case error {r:.6g} outside [0, {hi:.6g}]")


def _reconstruct_r(model):
    """R from the coefficients: 1 - tau.mu + (nu - 1) + lam.|mu|."""
    idx = model.mu.indices
    vals = model.mu.values
    return float(1.0 - model.stats.tau[idx] @ vals + (model.nu - 1.0)
                 + model.stats.lam[idx] @ np.abs(vals))


def train(data, fmap, cfg=None):
    """Run constraint generation on `data` under `fmap`.

    Returns (model, trace). The trace holds one record per solved
    subproblem: its worst-case error probability, working set size, how many
    features entered and left, pivot count and wall time. Monotonicity of
    R^k and warm start objective agreement are enforced, not assumed.
    """
    cfg = cfg or CgConfig()
    cfg.validate()
    kern = get_kernels(cfg.backend)
    stats = pb.estimate_moments(data, fmap, cfg.lambda_scale)
    cs = pb.build_constraints(data, fmap)
    solver = SimplexSolver(verify=cfg.verify, backend=cfg.backend,
                           max_iter=cfg.max_lp_iter)

    init_size = cfg.init_size if cfg.init_size is not None else cfg.n_max
    current = initial_features(stats, init_size)
    trace = CgTrace()

    prob = assemble_subproblem(stats, cs, current, kernels=kern)
    if cfg.dump_dir:
        dump_lp(prob, os.path.join(cfg.dump_dir, "subproblem_k1.lp"),
                name="subproblem k=1")
    sol, ms = solve_timed(solver, prob)
    _require_optimal(sol, 1)
    _check_r_range(sol.objective, fmap.n_classes)
    k = 1
    trace.append(IterationRecord(1, sol.objective, current.size,
                                 current.size, 0, sol.pivots, ms))
    mu = solution_coefficients(prob, sol, fmap.m)
    nu = sol.nu
    nxt = select(cs, stats, _sparse_alpha(sol), current, cfg.epsilon,
                 cfg.n_max, cfg.active_tol, kernels=kern)

    while np.setdiff1d(nxt, current).size > 0 and k <= cfg.k_max:
        k += 1
        warm = warm_start_from(mu, nu, nxt)
        prob = assemble_subproblem(stats, cs, nxt, kernels=kern)
        warm_obj = prob.objective(warm.mu1, warm.mu2, warm.nu)
        r_prev = trace.final.r
        if abs(warm_obj - r_prev) > WARM_OBJ_TOL:
            raise NumericalError(
                f"warm start objective {warm_obj:.12g} does not match "
                f"previous R {r_prev:.12g}")
        if cfg.dump_dir:
            dump_lp(prob, os.path.join(cfg.dump_dir, f"subproblem_k{k}.lp"),
                    name=f"subproblem k={k}")
        sol, ms = solve_timed(solver, prob, warm=warm)
        _require_optimal(sol, k)
        _check_r_range(sol.objective, fmap.n_classes)
        if sol.objective > r_prev + MONOTONE_TOL:
            raise NumericalError(
                f"R increased from {r_prev:.12g} to {sol.objective:.12g}")
        trace.append(IterationRecord(
            k, sol.objective, nxt.size, np.setdiff1d(nxt, current).size,
            np.setdiff1d(current, nxt).size, sol.pivots, ms, warm_obj))
        current = nxt
        mu = solution_coefficients(prob, sol, fmap.m)
        nu = sol.nu
        nxt = select(cs, stats, _sparse_alpha(sol), current, cfg.epsilon,
                     cfg.n_max, cfg.active_tol, kernels=kern)

    model = MrcModel(mu=mu, selected=current, nu=nu, r_star=trace.final.r,
                     fmap=fmap, stats=stats, config=cfg.public_dict(),
                     trace=trace, label_values=data.label_values)
    recon = _reconstruct_r(model)
    if abs(recon - model.r_star) > MONOTONE_TOL:
        raise NumericalError(
            f"objective reconstruction {recon:.12g} does not match "
            f"R {model.r_star:.12g}")
    return model, trace


# Variable count past which the one-shot solve gets slow and noisy.
FULL_SOLVE_WARN = 20000


def solve_full(data, fmap, stats=None, lambda_scale=1.0, verify=True,
               backend=None, max_lp_iter=None):
    """Solve the LP over all m features in one shot.

    Intended as the reference answer for small m and for benchmarking the
    constraint generation path. Warns when the variable count 2m + 1 passes
    FULL_SOLVE_WARN. Returns a model whose selected set is the support of
    the solved coefficients.
    """
    import warnings

    kern = get_kernels(backend)
    if stats is None:
        stats = pb.estimate_moments(data, fmap, lambda_scale)
    cs = pb.build_constraints(data, fmap)
    if 2 * fmap.m + 1 > FULL_SOLVE_WARN:
        warnings.warn(
            f"full LP has {2 * fmap.m + 1} variables; consider train()",
            RuntimeWarning, stacklevel=2)
    solver = SimplexSolver(verify=verify, backend=backend,
                           max_iter=max_lp_iter)
    prob = assemble_subproblem(stats, cs, np.arange(fmap.m), kernels=kern)
    sol, ms = solve_timed(solver, prob)
    _require_optimal(sol, 1)
    _check_r_range(sol.objective, fmap.n_classes)
    mu = solution_coefficients(prob, sol, fmap.m)
    trace = CgTrace()
    trace.append(IterationRecord(1, sol.objective, fmap.m, fmap.m, 0,
                                 sol.pivots, ms))
    model = MrcModel(mu=mu, selected=mu.indices.copy(), nu=sol.nu,
                     r_star=sol.objective, fmap=fmap, stats=stats,
                     config={"solver": "full"}, trace=trace,
                     label_values=data.label_values)
    recon = _reconstruct_r(model)
    if abs(recon - model.r_star) > MONOTONE_TOL:
        raise NumericalError(
            f"objective reconstruction {recon:.12g} does not match "
            f"R {model.r_star:.12g}")
    return model
