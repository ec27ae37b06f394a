"""Hot inner kernels, each in a vectorized numpy form and a numba loop form.

The active implementation is chosen once at import time from
``GOLDSTONE_GD_BACKEND`` (see :mod:`goldstone_gd._backend`). Both tables stay
importable so tests and the benchmark can compare them directly.

Array conventions: an embedding sequence is ``(T, d, n)``, a field of skew
matrices is ``(T, d, d)``, couplings are ``(T - 1, d, d)``.
"""
import numpy as np

from ._backend import BACKEND, HAVE_NUMBA, njit


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _gram_value_grad_np(Z, G):
    resid = np.matmul(Z.transpose(0, 2, 1), Z) - G
    losses = 0.25 * np.einsum("tij,tij->t", resid, resid)
    return losses, np.matmul(Z, resid)


def _factorization_value_grad_np(Z, X, n_u):
    U = Z[:, :, :n_u]
    V = Z[:, :, n_u:]
    E = np.matmul(U.transpose(0, 2, 1), V) - X
    losses = 0.5 * np.einsum("tij,tij->t", E, E)
    grad = np.empty_like(Z)
    grad[:, :, :n_u] = np.matmul(V, E.transpose(0, 2, 1))
    grad[:, :, n_u:] = np.matmul(U, E)
    return losses, grad


def _spring_value_grad_np(Z, lam, grad):
    diff = Z[1:] - Z[:-1]
    grad[1:] += lam * diff
    grad[:-1] -= lam * diff
    return 0.5 * lam * float(np.einsum("tij,tij->", diff, diff))


def _skew_index_pairs(d):
    return [(i, j) for i in range(d) for j in range(i)]


def _gauge_blocks_np(M):
    L, d, _ = M.shape
    pairs = _skew_index_pairs(d)
    K = len(pairs)
    basis = np.zeros((K, d, d))
    for k, (i, j) in enumerate(pairs):
        basis[k, i, j] = 1.0
        basis[k, j, i] = -1.0
    # Tr[B_k M] and Tr[B_i B_j M]
    g = np.einsum("kab,lba->lk", basis, M)
    prod = np.einsum("iab,jbc->ijac", basis, basis)
    tr = np.einsum("ijac,lca->lij", prod, M)
    H = -0.5 * (tr + tr.transpose(0, 2, 1))
    return g, H


def _block_tridiag_matvec_np(diag, off, x):
    y = np.einsum("sij,sj->si", diag, x)
    y[:-1] += np.einsum("sij,sj->si", off, x[1:])
    y[1:] += np.einsum("sji,sj->si", off, x[:-1])
    return y


def _block_tridiag_solve_py(diag, off, rhs, pivot_floor):
    """Block LDL^T elimination for a symmetric block-tridiagonal system.

    ``diag[s]`` are the diagonal blocks, ``off[s]`` the block at (s, s + 1).
    Returns ``(x, min_pivot, ok)``; ``ok`` is False as soon as a Schur
    complement has an eigenvalue at or below ``pivot_floor``.
    """
    S, K = rhs.shape
    schur = np.empty_like(diag)
    y = np.empty_like(rhs)
    x = np.zeros_like(rhs)
    min_pivot = np.inf
    for s in range(S):
        if s == 0:
            schur[s] = diag[s]
            y[s] = rhs[s]
        else:
            coupled = np.linalg.solve(schur[s - 1], off[s - 1])
            schur[s] = diag[s] - off[s - 1].T @ coupled
            schur[s] = 0.5 * (schur[s] + schur[s].T)
            y[s] = rhs[s] - off[s - 1].T @ np.linalg.solve(schur[s - 1], y[s - 1])
        lowest = np.linalg.eigvalsh(schur[s])[0]
        if lowest < min_pivot:
            min_pivot = lowest
        if lowest <= pivot_floor:
            return x, min_pivot, False
    x[S - 1] = np.linalg.solve(schur[S - 1], y[S - 1])
    for s in range(S - 2, -1, -1):
        x[s] = np.linalg.solve(schur[s], y[s] - off[s] @ x[s + 1])
    return x, min_pivot, True


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

@njit(cache=True)
def _gram_value_grad_nb(Z, G):
    T, d, n = Z.shape
    losses = np.zeros(T)
    grad = np.zeros_like(Z)
    resid = np.empty((n, n))
    for t in range(T):
        acc = 0.0
        for a in range(n):
            for b in range(a, n):
                s = 0.0
                for k in range(d):
                    s += Z[t, k, a] * Z[t, k, b]
                r = s - G[t, a, b]
                resid[a, b] = r
                resid[b, a] = r
                acc += r * r if a == b else 2.0 * r * r
        losses[t] = 0.25 * acc
        for k in range(d):
            for b in range(n):
                s = 0.0
                for a in range(n):
                    s += Z[t, k, a] * resid[a, b]
                grad[t, k, b] = s
    return losses, grad


@njit(cache=True)
def _factorization_value_grad_nb(Z, X, n_u):
    T, d, n = Z.shape
    n_v = n - n_u
    losses = np.zeros(T)
    grad = np.zeros_like(Z)
    E = np.empty((n_u, n_v))
    for t in range(T):
        acc = 0.0
        for a in range(n_u):
            for b in range(n_v):
                s = 0.0
                for k in range(d):
                    s += Z[t, k, a] * Z[t, k, n_u + b]
                r = s - X[t, a, b]
                E[a, b] = r
                acc += r * r
        losses[t] = 0.5 * acc
        for k in range(d):
            for a in range(n_u):
                s = 0.0
                for b in range(n_v):
                    s += Z[t, k, n_u + b] * E[a, b]
                grad[t, k, a] = s
            for b in range(n_v):
                s = 0.0
                for a in range(n_u):
                    s += Z[t, k, a] * E[a, b]
                grad[t, k, n_u + b] = s
    return losses, grad


@njit(cache=True)
def _spring_value_grad_nb(Z, lam, grad):
    T, d, n = Z.shape
    acc = 0.0
    for t in range(1, T):
        for k in range(d):
            for a in range(n):
                diff = Z[t, k, a] - Z[t - 1, k, a]
                acc += diff * diff
                grad[t, k, a] += lam * diff
                grad[t - 1, k, a] -= lam * diff
    return 0.5 * lam * acc


@njit(cache=True)
def _gauge_blocks_nb(M):
    L, d, _ = M.shape
    K = d * (d - 1) // 2
    rows = np.empty(K, np.int64)
    cols = np.empty(K, np.int64)
    k = 0
    for i in range(d):
        for j in range(i):
            rows[k] = i
            cols[k] = j
            k += 1
    g = np.zeros((L, K))
    H = np.zeros((L, K, K))
    for l in range(L):
        for p in range(K):
            a = rows[p]
            b = cols[p]
            # B_p = E_ab - E_ba, so Tr[B_p M] = M_ba - M_ab
            g[l, p] = M[l, b, a] - M[l, a, b]
            for q in range(p, K):
                c = rows[q]
                e = cols[q]
                # Tr[B_p B_q M] + Tr[B_q B_p M], expanded on unit matrices
                s = 0.0
                if b == c:
                    s += M[l, e, a] + M[l, a, e]
                if b == e:
                    s -= M[l, c, a] + M[l, a, c]
                if a == c:
                    s -= M[l, e, b] + M[l, b, e]
                if a == e:
                    s += M[l, c, b] + M[l, b, c]
                H[l, p, q] = -0.5 * s
                H[l, q, p] = -0.5 * s
    return g, H


@njit(cache=True)
def _block_tridiag_matvec_nb(diag, off, x):
    S, K = x.shape
    y = np.zeros_like(x)
    for s in range(S):
        for i in range(K):
            acc = 0.0
            for j in range(K):
                acc += diag[s, i, j] * x[s, j]
                if s + 1 < S:
                    acc += off[s, i, j] * x[s + 1, j]
                if s > 0:
                    acc += off[s - 1, j, i] * x[s - 1, j]
            y[s, i] = acc
    return y


_block_tridiag_solve_nb = njit(cache=True)(_block_tridiag_solve_py)


NUMPY_KERNELS = {
    "gram_value_grad": _gram_value_grad_np,
    "factorization_value_grad": _factorization_value_grad_np,
    "spring_value_grad": _spring_value_grad_np,
    "gauge_blocks": _gauge_blocks_np,
    "block_tridiag_matvec": _block_tridiag_matvec_np,
    "block_tridiag_solve": _block_tridiag_solve_py,
}

NUMBA_KERNELS = {
    "gram_value_grad": _gram_value_grad_nb,
    "factorization_value_grad": _factorization_value_grad_nb,
    "spring_value_grad": _spring_value_grad_nb,
    "gauge_blocks": _gauge_blocks_nb,
    "block_tridiag_matvec": _block_tridiag_matvec_nb,
    "block_tridiag_solve": _block_tridiag_solve_nb,
}

# The Gram kernel is two batched matmuls; BLAS beats the loop version there.
NUMBA_DISPATCH = {**NUMBA_KERNELS, "gram_value_grad": _gram_value_grad_np}

ACTIVE = NUMBA_DISPATCH if (BACKEND == "numba" and HAVE_NUMBA) else NUMPY_KERNELS

gram_value_grad = ACTIVE["gram_value_grad"]
factorization_value_grad = ACTIVE["factorization_value_grad"]
spring_value_grad = ACTIVE["spring_value_grad"]
gauge_blocks = ACTIVE["gauge_blocks"]
block_tridiag_matvec = ACTIVE["block_tridiag_matvec"]
block_tridiag_solve = ACTIVE["block_tridiag_solve"]
