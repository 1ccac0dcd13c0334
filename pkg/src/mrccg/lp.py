"""Dense revised simplex for the minimax subproblem LP.

The subproblem over a feature subset J with columns F (one row per
instance-subset pair) is

    min  -(tau - lam)' mu1 + (tau + lam)' mu2 + nu
    s.t. F (mu1 - mu2) - nu <= b,   mu1, mu2 >= 0,   nu free,

whose dual variables alpha >= 0 satisfy sum(alpha) = 1 and
tau - lam <= F' alpha <= tau + lam at optimality. The solver keeps nu basic
throughout, starts either from the always-feasible point mu = 0,
nu = max(-b), or from a caller-supplied warm start, and reports the dual
vector alongside the primal solution.

Certificates (primal and dual feasibility, complementary slackness, strong
duality) are recomputed from the returned arrays by `verify_certificates`
and checked after every solve unless the caller opts out.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from mrccg.backend import get_kernels
from mrccg.errors import CertificateError, LpError
from mrccg.sparsevec import SparseVector

STATUS_OPTIMAL = "optimal"
STATUS_ITERATION_LIMIT = "iteration_limit"
STATUS_UNBOUNDED = "unbounded"

_STATUS_NAMES = {0: STATUS_OPTIMAL, 1: STATUS_ITERATION_LIMIT,
                 2: STATUS_UNBOUNDED}


class LpProblem:
    """One subproblem instance: columns F, rhs b, and the cost data.

    features holds the global feature ids behind F's columns, sorted
    ascending; c1 and c2 are the costs of the positive and negative
    coefficient parts.
    """

    def __init__(self, F, b, tau, lam, features):
        F = np.ascontiguousarray(F, dtype=np.float64)
        b = np.ascontiguousarray(b, dtype=np.float64)
        tau = np.ascontiguousarray(tau, dtype=np.float64)
        lam = np.ascontiguousarray(lam, dtype=np.float64)
        features = np.asarray(features, dtype=np.int64)
        if F.ndim != 2:
            raise LpError("F must be 2-d")
        S, k = F.shape
        if b.shape != (S,) or tau.shape != (k,) or lam.shape != (k,) \
                or features.shape != (k,):
            raise LpError("inconsistent problem dimensions")
        if k == 0:
            raise LpError("need at least one feature column")
        if np.any(lam < 0):
            raise LpError("lam must be nonnegative")
        if np.any(np.diff(features) <= 0):
            raise LpError("features must be strictly increasing")
        self.F = F
        self.b = b
        self.tau = tau
        self.lam = lam
        self.features = features
        self.c1 = -(tau - lam)
        self.c2 = tau + lam

    @property
    def n_rows(self):
        return self.F.shape[0]

    @property
    def n_features(self):
        return self.F.shape[1]

    def objective(self, mu1, mu2, nu):
        return float(self.c1 @ mu1 + self.c2 @ mu2 + nu)

    def activity(self, mu1, mu2, nu):
        """Left-hand side F(mu1 - mu2) - nu of the inequality rows."""
        return self.F @ (mu1 - mu2) - nu

    def trivial_point(self):
        """The always-feasible start mu = 0, nu = max(-b)."""
        k = self.n_features
        return WarmStart(np.zeros(k), np.zeros(k), float(-self.b.min()))


@dataclass
class WarmStart:
    """A primal-feasible point in split form; mu1, mu2 >= 0."""

    mu1: np.ndarray
    mu2: np.ndarray
    nu: float


@dataclass
class LpSolution:
    status: str
    objective: float
    mu1: np.ndarray
    mu2: np.ndarray
    nu: float
    alpha: np.ndarray
    basis: np.ndarray = field(repr=False)
    pivots: int = 0

    @property
    def mu(self):
        return self.mu1 - self.mu2

    def dual_objective(self, prob):
        return float(-prob.b @ self.alpha)


def assemble_subproblem(stats, cs, J, kernels=None):
    """Build the LpProblem for feature subset J from moments and rows."""
    from mrccg import problem as pb
    J = np.unique(np.asarray(J, dtype=np.int64))
    F = pb.columns(cs, J, kernels=kernels)
    return LpProblem(F, cs.b, stats.tau[J], stats.lam[J], J)


def warm_start_from(mu_prev, nu_prev, J_new, tol=1e-9):
    """Restrict a previous solution to a new feature subset.

    mu_prev is a SparseVector over all m features. Coefficients outside
    J_new must be zero up to `tol`: the constraint generation step only ever
    drops features whose coefficient vanished, so anything larger indicates
    a bookkeeping bug.
    """
    J_new = np.asarray(J_new, dtype=np.int64)
    if mu_prev.indices.size:
        inside = np.isin(mu_prev.indices, J_new)
        dropped = np.abs(mu_prev.values[~inside])
        if dropped.size and dropped.max() > tol:
            raise LpError(
                f"warm start drops a feature with coefficient {dropped.max():.3e}")
    vals = mu_prev.restrict(J_new)
    return WarmStart(np.maximum(vals, 0.0), np.maximum(-vals, 0.0),
                     float(nu_prev))


def _nu_position(basis, nu_col):
    pos = np.nonzero(basis == nu_col)[0]
    if pos.size != 1:
        raise LpError("basis must contain the nu column exactly once")
    return int(pos[0])


# Anti-stall perturbation of the right-hand side, retried smaller if the
# optimal basis fails to restore against the true rows; 0.0 must stay last.
_PERTURB_SCALES = (1e-10, 1e-11, 0.0)
_PERTURB_SEED = 7


class SimplexSolver:
    """Revised simplex with explicit basis inverse and warm starting.

    Tolerances: opt_tol bounds reduced-cost violations, feas_tol is used for
    warm start admission, cert_tol for post-solve certificate checks,
    piv_tol is the smallest acceptable pivot element. Degenerate vertices are
    handled twice over: the right-hand side is perturbed along the starting
    basis so ratio tests give positive steps, and residual ties fall to a
    lexicographic ratio test, so plateaus cannot cycle. Optimal bases are
    re-validated and reported against the unperturbed rows. The basis
    inverse is rebuilt every `refactor_every` pivots and before optimality
    is declared.
    """

    def __init__(self, opt_tol=1e-9, feas_tol=1e-9, cert_tol=1e-8,
                 piv_tol=1e-9, refactor_every=64, max_iter=None, verify=True,
                 backend=None):
        self.opt_tol = float(opt_tol)
        self.feas_tol = float(feas_tol)
        self.cert_tol = float(cert_tol)
        self.piv_tol = float(piv_tol)
        self.refactor_every = int(refactor_every)
        self.max_iter = max_iter
        self.verify = bool(verify)
        self.backend = backend

    def solve(self, prob, warm=None):
        """Solve `prob`, optionally from a warm start.

        warm may be a WarmStart point or a basis array from a previous
        LpSolution on a problem with the same rows and features. Returns an
        LpSolution; raises LpError on an infeasible warm start or a singular
        basis, CertificateError if verification fails on an optimal result.
        """
        kern = get_kernels(self.backend)
        S, k = prob.F.shape
        nu_col = 2 * k
        ncol = nu_col + 1 + S

        if warm is None:
            warm = prob.trivial_point()
        if isinstance(warm, np.ndarray):
            basis, binv, xb = self._adopt_basis(prob, warm, nu_col)
        else:
            basis, binv, xb = self._crash_basis(prob, warm, nu_col, kern)
        in_basis = np.zeros(ncol, dtype=np.bool_)
        in_basis[basis] = True

        FT = np.ascontiguousarray(prob.F.T)
        max_iter = self.max_iter if self.max_iter is not None else 20000 + 40 * S
        start = (basis.copy(), binv.copy(), xb.copy())
        total_pivots = 0
        for attempt, scale in enumerate(_PERTURB_SCALES):
            if attempt:
                basis[:], binv[:], xb[:] = start
                in_basis[:] = False
                in_basis[basis] = True
            bp = self._perturbed_rhs(prob, basis, nu_col, scale)
            if scale != 0.0:
                xb[:] = binv @ bp
            try:
                code, pivots = kern.simplex_loop(
                    prob.F, FT, bp, prob.c1, prob.c2, basis, in_basis, binv,
                    xb, self.opt_tol, self.piv_tol, self.refactor_every,
                    int(max_iter))
            except np.linalg.LinAlgError as exc:
                raise LpError(
                    f"singular basis during pivoting: {exc}") from exc
            total_pivots += int(pivots)
            if int(code) != 0 or scale == 0.0:
                break
            # Optimality was proved for the perturbed rows. The basis stays
            # dual feasible for the true rows, so it is optimal for them as
            # well iff the restored basic values are still nonnegative.
            xb_true = binv @ prob.b
            gate = np.delete(xb_true, _nu_position(basis, nu_col))
            if not gate.size or gate.min() >= -self.feas_tol:
                break

        if scale != 0.0:
            xb = binv @ prob.b
        sol = self._extract(prob, basis, binv, xb, nu_col, total_pivots,
                            _STATUS_NAMES[int(code)])
        if sol.status == STATUS_OPTIMAL and self.verify:
            violations = verify_certificates(prob, sol, self.cert_tol)
            if violations:
                raise CertificateError(violations)
        return sol

    # -- basis construction ------------------------------------------------

    def _adopt_basis(self, prob, basis, nu_col):
        S = prob.n_rows
        basis = np.array(basis, dtype=np.int64, copy=True)
        if basis.shape != (S,):
            raise LpError("basis must have one entry per row")
        if basis.min() < 0 or basis.max() >= nu_col + 1 + S:
            raise LpError("basis column index out of range")
        if np.unique(basis).size != S:
            raise LpError("basis has repeated columns")
        _nu_position(basis, nu_col)
        binv, xb = self._factorize(prob, basis, nu_col)
        nonneg = np.delete(xb, _nu_position(basis, nu_col))
        if nonneg.size and nonneg.min() < -self.feas_tol:
            raise LpError(
                f"warm basis is primal infeasible by {-nonneg.min():.3e}")
        return basis, binv, xb

    def _crash_basis(self, prob, point, nu_col, kern):
        """Turn a feasible point into a starting basis.

        Positive slacks pivot first (each unit column claims its own row),
        then the nonzero structural columns, then nu; remaining rows are
        covered by their slack columns at value zero. Structural columns
        with negligible value that turn out linearly dependent are dropped
        rather than rejected.
        """
        S, k = prob.F.shape
        mu1 = np.asarray(point.mu1, dtype=np.float64)
        mu2 = np.asarray(point.mu2, dtype=np.float64)
        if mu1.shape != (k,) or mu2.shape != (k,):
            raise LpError("warm start dimensions do not match the problem")
        if mu1.min(initial=0.0) < -self.feas_tol or mu2.min(initial=0.0) < -self.feas_tol:
            raise LpError("warm start has negative mu parts")
        mu1 = np.maximum(mu1, 0.0)
        mu2 = np.maximum(mu2, 0.0)
        slack = prob.b - prob.activity(mu1, mu2, point.nu)
        if slack.min() < -self.feas_tol:
            raise LpError(
                f"warm start point violates a row by {-slack.min():.3e}")

        slack_rows = np.nonzero(slack > self.feas_tol)[0]
        s1 = np.nonzero(mu1 > 0.0)[0]
        s2 = np.nonzero(mu2 > 0.0)[0]
        cand = np.concatenate([nu_col + 1 + slack_rows, s1, k + s2, [nu_col]])
        if cand.size > S:
            raise LpError("warm start point has too many nonzeros for a basis")

        cols = np.zeros((S, cand.size))
        cols[slack_rows, np.arange(slack_rows.size)] = 1.0
        ns = slack_rows.size
        cols[:, ns:ns + s1.size] = prob.F[:, s1]
        cols[:, ns + s1.size:ns + s1.size + s2.size] = -prob.F[:, s2]
        cols[:, -1] = -1.0

        piv = kern.select_pivot_rows(cols, 1e-11)
        keep = np.ones(cand.size, dtype=bool)
        values = np.concatenate([slack[slack_rows], mu1[s1], mu2[s2], [np.inf]])
        for j in np.nonzero(piv < 0)[0]:
            if values[j] > 1e-8:
                raise LpError("warm start point is not an extreme point")
            keep[j] = False
        basis = cand[keep]
        covered = np.zeros(S, dtype=bool)
        covered[piv[keep]] = True
        free_rows = np.nonzero(~covered)[0]
        basis = np.concatenate([basis, nu_col + 1 + free_rows])
        binv, xb = self._factorize(prob, basis, nu_col)
        return basis, binv, xb

    def _perturbed_rhs(self, prob, basis, nu_col, scale):
        """Right-hand side shifted so every starting basic value grows.

        b + B eps with eps > 0 keeps the starting point feasible and pulls
        the basic values off zero, so ratio tests on a degenerate vertex
        yield strictly positive steps instead of stalling. eps is fixed by a
        seeded generator: reruns and backends see identical arithmetic.
        """
        if scale == 0.0:
            return prob.b
        S, k = prob.F.shape
        eps = scale * (0.5 + np.random.default_rng(_PERTURB_SEED).random(S))
        shift = np.zeros(S)
        for i, j in enumerate(basis):
            if j < k:
                shift += eps[i] * prob.F[:, j]
            elif j < nu_col:
                shift -= eps[i] * prob.F[:, j - k]
            elif j == nu_col:
                shift -= eps[i]
            else:
                shift[j - nu_col - 1] += eps[i]
        return prob.b + shift

    def _factorize(self, prob, basis, nu_col):
        S, k = prob.F.shape
        bm = np.zeros((S, S))
        for i, j in enumerate(basis):
            if j < k:
                bm[:, i] = prob.F[:, j]
            elif j < nu_col:
                bm[:, i] = -prob.F[:, j - k]
            elif j == nu_col:
                bm[:, i] = -1.0
            else:
                bm[j - nu_col - 1, i] = 1.0
        try:
            binv = np.ascontiguousarray(np.linalg.inv(bm))
        except np.linalg.LinAlgError as exc:
            raise LpError(f"singular starting basis: {exc}") from exc
        return binv, binv @ prob.b

    # -- solution extraction ----------------------------------------------

    def _extract(self, prob, basis, binv, xb, nu_col, pivots, status):
        S, k = prob.F.shape
        z = np.zeros(nu_col + 1)
        struct = basis <= nu_col
        z[basis[struct]] = xb[struct]
        mu1, mu2, nu = z[:k], z[k:nu_col], float(z[nu_col])

        cfull = np.concatenate((prob.c1, prob.c2, [1.0], np.zeros(S)))
        pi = cfull[basis] @ binv
        alpha = -pi
        alpha[(alpha < 0.0) & (alpha > -1e-9)] = 0.0
        return LpSolution(status, prob.objective(mu1, mu2, nu), mu1, mu2, nu,
                          alpha, basis.copy(), pivots)


def verify_certificates(prob, sol, cert_tol=1e-8, sum_tol=1e-10,
                        dual_neg_tol=1e-12):
    """Independent optimality check; returns a list of violation messages.

    Checks primal feasibility, the dual box and simplex constraints,
    row-wise complementary slackness, and strong duality. All quantities are
    recomputed from the solution arrays, not from solver internals.
    """
    out = []
    act = prob.activity(sol.mu1, sol.mu2, sol.nu)
    slack = prob.b - act
    worst = -slack.min() if slack.size else 0.0
    if worst > cert_tol:
        out.append(f"primal row violation {worst:.3e}")
    mmin = min(sol.mu1.min(initial=0.0), sol.mu2.min(initial=0.0))
    if mmin < -cert_tol:
        out.append(f"negative mu part {mmin:.3e}")

    alpha = sol.alpha
    if alpha.min(initial=0.0) < -dual_neg_tol:
        out.append(f"negative dual weight {alpha.min():.3e}")
    ssum = abs(alpha.sum() - 1.0)
    if ssum > sum_tol:
        out.append(f"dual weights sum off by {ssum:.3e}")
    q = prob.F.T @ alpha
    lo = (prob.tau - prob.lam - q).max(initial=0.0)
    hi = (q - prob.tau - prob.lam).max(initial=0.0)
    if lo > cert_tol:
        out.append(f"dual box lower violation {lo:.3e}")
    if hi > cert_tol:
        out.append(f"dual box upper violation {hi:.3e}")

    cs_gap = np.abs(alpha * slack).max(initial=0.0)
    if cs_gap > cert_tol:
        out.append(f"complementary slackness gap {cs_gap:.3e}")

    gap = abs(sol.objective - sol.dual_objective(prob))
    if gap > cert_tol * (1.0 + abs(sol.objective)):
        out.append(f"duality gap {gap:.3e}")
    return out


def solution_coefficients(prob, sol, m):
    """Lift the solved coefficients to a SparseVector over all m features."""
    vals = sol.mu
    nz = np.nonzero(vals)[0]
    return SparseVector(m, prob.features[nz], vals[nz])


def dump_lp(prob, path, name="subproblem"):
    """Write the subproblem in LP text format (CPLEX dialect)."""
    lines = [f"\\ {name}: {prob.n_features} feature pairs, "
             f"{prob.n_rows} rows", "Minimize", " obj:"]
    terms = []
    for j, fid in enumerate(prob.features):
        terms.append(f"{prob.c1[j]:+.17g} x1_{fid}")
        terms.append(f"{prob.c2[j]:+.17g} x2_{fid}")
    terms.append("+1 nu")
    lines[-1] += " " + " ".join(terms)
    lines.append("Subject To")
    for r in range(prob.n_rows):
        parts = []
        for j, fid in enumerate(prob.features):
            coef = prob.F[r, j]
            if coef != 0.0:
                parts.append(f"{coef:+.17g} x1_{fid} {-coef:+.17g} x2_{fid}")
        parts.append("-1 nu")
        lines.append(f" r{r}: " + " ".join(parts) + f" <= {prob.b[r]:.17g}")
    lines.append("Bounds")
    lines.append(" nu free")
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def solve_timed(solver, prob, warm=None):
    """solver.solve wrapped with a wall-clock timer; returns (sol, ms)."""
    t0 = time.perf_counter()
    sol = solver.solve(prob, warm=warm)
    return sol, (time.perf_counter() - t0) * 1e3
