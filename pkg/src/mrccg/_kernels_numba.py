"""Numba-jitted implementations of the numeric kernels.

Mirrors `_kernels_numpy` function for function; see that module for the data
layout and column index conventions. Loops here are deliberate: numba turns
them into tight machine code, and keeping the arithmetic order identical to
the numpy backend keeps the two paths comparable in tests.
"""

import numpy as np
from numba import njit

STATUS_OPTIMAL = 0
STATUS_ITERATION_LIMIT = 1
STATUS_UNBOUNDED = 2


@njit(cache=True)
def build_columns(psi, class_idx, comp_idx, weights):
    n = psi.shape[0]
    n_subsets = weights.shape[1]
    k = class_idx.shape[0]
    out = np.empty((n * n_subsets, k))
    for j in range(k):
        y = class_idx[j]
        p = comp_idx[j]
        for i in range(n):
            v = psi[i, p]
            base = i * n_subsets
            for t in range(n_subsets):
                out[base + t, j] = v * weights[y, t]
    return out


@njit(cache=True)
def accumulate_dual_image(psi, inst_idx, mask_idx, vals, sizes, n_classes):
    dprime = psi.shape[1]
    out = np.zeros(n_classes * dprime)
    for r in range(inst_idx.shape[0]):
        mask = mask_idx[r]
        coef = vals[r] / sizes[mask - 1]
        i = inst_idx[r]
        for y in range(n_classes):
            if (mask >> y) & 1:
                base = y * dprime
                for p in range(dprime):
                    out[base + p] += coef * psi[i, p]
    return out


@njit(cache=True)
def select_pivot_rows(cols, tol):
    u = cols.copy()
    n_rows, n_cols = u.shape
    used = np.zeros(n_rows, dtype=np.bool_)
    piv = np.full(n_cols, -1, dtype=np.int64)
    for j in range(n_cols):
        best = -1
        bmag = tol
        for i in range(n_rows):
            if not used[i]:
                mag = abs(u[i, j])
                if mag > bmag:
                    bmag = mag
                    best = i
        if best < 0:
            continue
        piv[j] = best
        used[best] = True
        for i in range(n_rows):
            if not used[i] and u[i, j] != 0.0:
                f = u[i, j] / u[best, j]
                for t in range(j + 1, n_cols):
                    u[i, t] -= f * u[best, t]
    return piv


@njit(cache=True)
def _fill_column(F, j, out):
    S, k = F.shape
    for i in range(S):
        out[i] = 0.0
    if j < k:
        for i in range(S):
            out[i] = F[i, j]
    elif j < 2 * k:
        jj = j - k
        for i in range(S):
            out[i] = -F[i, jj]
    elif j == 2 * k:
        for i in range(S):
            out[i] = -1.0
    else:
        out[j - 2 * k - 1] = 1.0


@njit(cache=True)
def _refactor(F, b, basis, binv, xb):
    S = b.shape[0]
    bm = np.empty((S, S))
    col = np.empty(S)
    for i in range(S):
        _fill_column(F, basis[i], col)
        for r in range(S):
            bm[r, i] = col[r]
    binv[:, :] = np.linalg.inv(bm)
    xb[:] = np.dot(binv, b)


@njit(cache=True)
def _reset_lex(lex):
    S = lex.shape[0]
    for i in range(S):
        for j in range(S):
            lex[i, j] = 0.0
        lex[i, i] = 1.0


@njit(cache=True)
def simplex_loop(F, FT, b, c1, c2, basis, in_basis, binv, xb,
                 opt_tol, piv_tol, refactor_every, max_iter):
    S, k = F.shape
    nu_col = 2 * k
    n_struct = nu_col + 1
    ncol = n_struct + S
    cfull = np.zeros(ncol)
    for j in range(k):
        cfull[j] = c1[j]
        cfull[k + j] = c2[j]
    cfull[nu_col] = 1.0

    col = np.empty(S)
    cand = np.empty(S, dtype=np.int64)
    lex = np.eye(S)
    pivots = 0
    since_refactor = 0

    while True:
        cb = cfull[basis]
        pi = np.dot(cb, binv)
        q = np.dot(FT, pi)
        d = np.empty(ncol)
        for j in range(k):
            d[j] = c1[j] - q[j]
            d[k + j] = c2[j] + q[j]
        d[nu_col] = np.inf
        for r in range(S):
            d[n_struct + r] = -pi[r]
        for j in range(ncol):
            if in_basis[j]:
                d[j] = np.inf

        entering = int(np.argmin(d))
        if d[entering] >= -opt_tol:
            entering = -1

        if entering < 0:
            if since_refactor == 0:
                return STATUS_OPTIMAL, pivots
            _refactor(F, b, basis, binv, xb)
            _reset_lex(lex)
            since_refactor = 0
            continue

        if pivots >= max_iter:
            _refactor(F, b, basis, binv, xb)
            return STATUS_ITERATION_LIMIT, pivots

        _fill_column(F, entering, col)
        w = np.dot(binv, col)

        theta = np.inf
        any_eligible = False
        for i in range(S):
            if basis[i] != nu_col and w[i] > piv_tol:
                any_eligible = True
                xi = xb[i]
                if xi < 0.0:
                    xi = 0.0
                ratio = xi / w[i]
                if ratio < theta:
                    theta = ratio
        if not any_eligible:
            return STATUS_UNBOUNDED, pivots

        nc = 0
        for i in range(S):
            if basis[i] != nu_col and w[i] > piv_tol:
                xi = xb[i]
                if xi < 0.0:
                    xi = 0.0
                if xi / w[i] == theta:
                    cand[nc] = i
                    nc += 1
        for lexcol in range(S):
            if nc == 1:
                break
            best = np.inf
            for t in range(nc):
                v = lex[cand[t], lexcol] / w[cand[t]]
                if v < best:
                    best = v
            j = 0
            for t in range(nc):
                if lex[cand[t], lexcol] / w[cand[t]] == best:
                    cand[j] = cand[t]
                    j += 1
            nc = j
        leave = int(cand[0])

        wl = w[leave]
        for t in range(S):
            binv[leave, t] /= wl
        for i in range(S):
            if i != leave and w[i] != 0.0:
                wi = w[i]
                for t in range(S):
                    binv[i, t] -= wi * binv[leave, t]
        for t in range(S):
            lex[leave, t] /= wl
        for i in range(S):
            if i != leave and w[i] != 0.0:
                wi = w[i]
                for t in range(S):
                    lex[i, t] -= wi * lex[leave, t]
        for i in range(S):
            xb[i] -= theta * w[i]
        xb[leave] = theta

        in_basis[basis[leave]] = False
        in_basis[entering] = True
        basis[leave] = entering
        pivots += 1
        since_refactor += 1

        if since_refactor >= refactor_every or np.min(xb) < -1e-7:
            _refactor(F, b, basis, binv, xb)
            _reset_lex(lex)
            since_refactor = 0
