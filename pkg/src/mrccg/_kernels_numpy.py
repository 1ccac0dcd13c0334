"""Pure-numpy implementations of the numeric kernels.

This is the fallback backend; `_kernels_numba` provides jitted versions with
the same signatures and the same arithmetic. Keep the two in sync: the solver
treats them as interchangeable and the test suite compares their output.

Column index convention for the subproblem LP, with k structural feature
pairs and S constraint rows:

    [0, k)        mu1 (positive part), cost -(tau - lam)
    [k, 2k)       mu2 (negative part), cost  (tau + lam)
    2k            nu, free, cost 1
    [2k+1, ..)    slack of row r, cost 0

The basis is tracked as an explicit inverse updated by eta pivots and rebuilt
from scratch every `refactor_every` pivots; optimality is only declared on a
freshly refactorized basis so the reported solution is not polluted by
accumulated update error.
"""

import numpy as np

STATUS_OPTIMAL = 0
STATUS_ITERATION_LIMIT = 1
STATUS_UNBOUNDED = 2

# Leaving-row ties at the minimum ratio are resolved lexicographically using
# E = B^-1 B0, where B0 is the basis at the last refactorization: E starts as
# the identity there, which makes every tableau row (xb_i | E_i) lex-positive,
# and is updated by the same eta transforms as the basis inverse. Under this
# rule each pivot strictly lex-decreases the objective of the problem whose
# right-hand side is virtually perturbed by B0 (eps, eps^2, ...), so no basis
# repeats between refactorizations and degenerate plateaus are crossed in an
# orderly walk instead of the crawl of index-order (Bland) pivoting. All
# comparisons are exact float operations, identical in both backends.


def build_columns(psi, class_idx, comp_idx, weights):
    """Materialize constraint matrix columns for the requested features.

    psi is the (n, d') instance embedding cache, weights[y, mask-1] holds
    [y in C]/|C| for the subset encoded by bitmask `mask`. Row order is
    instance-major, then mask = 1 .. 2^K - 1.
    """
    n = psi.shape[0]
    n_subsets = weights.shape[1]
    vals = psi[:, comp_idx]                      # (n, k)
    wsel = weights[class_idx].T                  # (n_subsets, k)
    out = vals[:, None, :] * wsel[None, :, :]    # (n, n_subsets, k)
    return np.ascontiguousarray(out.reshape(n * n_subsets, class_idx.shape[0]))


def accumulate_dual_image(psi, inst_idx, mask_idx, vals, sizes, n_classes):
    """Return F_full^T alpha over all n_classes * d' features.

    alpha is given sparsely: row (inst_idx[r], mask_idx[r]) carries weight
    vals[r]. sizes[mask-1] is the subset cardinality |C|.
    """
    dprime = psi.shape[1]
    out = np.zeros(n_classes * dprime)
    for r in range(inst_idx.shape[0]):
        mask = int(mask_idx[r])
        coef = vals[r] / sizes[mask - 1]
        row = psi[inst_idx[r]]
        for y in range(n_classes):
            if (mask >> y) & 1:
                out[y * dprime:(y + 1) * dprime] += coef * row
    return out


def select_pivot_rows(cols, tol):
    """Gaussian elimination with partial pivoting over the columns of `cols`.

    Returns one pivot row per column, -1 where a column is linearly dependent
    on its predecessors. Used to assemble a starting basis from a feasible
    point: the caller passes candidate basic columns and completes the basis
    with unit slacks on the unused rows.
    """
    u = np.array(cols, dtype=np.float64, copy=True)
    n_rows, n_cols = u.shape
    used = np.zeros(n_rows, dtype=np.bool_)
    piv = np.full(n_cols, -1, dtype=np.int64)
    for j in range(n_cols):
        mag = np.abs(u[:, j])
        mag[used] = 0.0
        r = int(np.argmax(mag))
        if mag[r] <= tol:
            continue
        piv[j] = r
        used[r] = True
        if j + 1 < n_cols:
            factors = u[:, j] / u[r, j]
            rest = ~used
            u[rest, j + 1:] -= np.outer(factors[rest], u[r, j + 1:])
    return piv


def _fill_column(F, j, out):
    k = F.shape[1]
    out[:] = 0.0
    if j < k:
        out[:] = F[:, j]
    elif j < 2 * k:
        out[:] = -F[:, j - k]
    elif j == 2 * k:
        out[:] = -1.0
    else:
        out[j - 2 * k - 1] = 1.0


def _refactor(F, b, basis, binv, xb):
    S = b.shape[0]
    bm = np.empty((S, S))
    col = np.empty(S)
    for i in range(S):
        _fill_column(F, basis[i], col)
        bm[:, i] = col
    binv[:, :] = np.linalg.inv(bm)
    xb[:] = binv @ b


def _reset_lex(lex):
    # Re-anchor the tie-break state to the just-refactorized basis, where
    # B^-1 B0 is the identity and the lex-positivity invariant holds exactly.
    lex[:, :] = 0.0
    np.fill_diagonal(lex, 1.0)


def simplex_loop(F, FT, b, c1, c2, basis, in_basis, binv, xb,
                 opt_tol, piv_tol, refactor_every, max_iter):
    """Revised primal simplex on the subproblem LP, from a given basis.

    Mutates basis, in_basis, binv and xb in place and returns
    (status, pivot_count). The nu column (index 2k) is kept basic throughout:
    it is never priced as entering and its row never leaves in the ratio test,
    which is sound because nu is a free variable. Entering is by most
    negative reduced cost; the leaving row uses the lexicographic ratio test
    described at the top of the module.
    """
    S, k = F.shape
    nu_col = 2 * k
    n_struct = nu_col + 1
    ncol = n_struct + S
    cfull = np.concatenate((c1, c2, np.array([1.0]), np.zeros(S)))

    col = np.empty(S)
    lex = np.eye(S)
    pivots = 0
    since_refactor = 0

    while True:
        cb = cfull[basis]
        pi = cb @ binv
        q = FT @ pi
        d = np.empty(ncol)
        d[:k] = c1 - q
        d[k:nu_col] = c2 + q
        d[nu_col] = np.inf
        d[n_struct:] = -pi
        d[in_basis] = np.inf

        entering = int(np.argmin(d))
        if d[entering] >= -opt_tol:
            entering = -1

        if entering < 0:
            if since_refactor == 0:
                return STATUS_OPTIMAL, pivots
            # Re-test optimality against an exact inverse before declaring it.
            _refactor(F, b, basis, binv, xb)
            _reset_lex(lex)
            since_refactor = 0
            continue

        if pivots >= max_iter:
            _refactor(F, b, basis, binv, xb)
            return STATUS_ITERATION_LIMIT, pivots

        _fill_column(F, entering, col)
        w = binv @ col

        eligible = (w > piv_tol) & (basis != nu_col)
        if not eligible.any():
            return STATUS_UNBOUNDED, pivots

        ratios = np.full(S, np.inf)
        np.divide(np.maximum(xb, 0.0), w, out=ratios, where=eligible)
        theta = ratios.min()
        cand = np.nonzero(ratios == theta)[0]
        for lexcol in range(S):
            if cand.size == 1:
                break
            vals = lex[cand, lexcol] / w[cand]
            cand = cand[vals == vals.min()]
        leave = int(cand[0])

        br = binv[leave] / w[leave]
        binv -= np.outer(w, br)
        binv[leave] = br
        er = lex[leave] / w[leave]
        lex -= np.outer(w, er)
        lex[leave] = er
        xb -= theta * w
        xb[leave] = theta

        in_basis[basis[leave]] = False
        in_basis[entering] = True
        basis[leave] = entering
        pivots += 1
        since_refactor += 1

        if since_refactor >= refactor_every or xb.min() < -1e-7:
            _refactor(F, b, basis, binv, xb)
            _reset_lex(lex)
            since_refactor = 0
