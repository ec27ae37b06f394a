"""Skew-symmetric matrices, their coordinates, and the exponential map to SO(d).

Basis convention shared by the whole package: the k-th generator has ``+1``
at the k-th strictly-lower position ``(i, j)`` (row-major, ``i > j``) and
``-1`` at ``(j, i)``.
"""
import math

import numpy as np

_TAYLOR_DEGREE = 18
_SCALED_NORM = 0.25


def skew_dim(d):
    """Dimension of so(d)."""
    return d * (d - 1) // 2


def skew_pairs(d):
    return [(i, j) for i in range(d) for j in range(i)]


def skew_basis(d):
    """Ordered basis of so(d) as an array of shape ``(d(d-1)/2, d, d)``."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    pairs = skew_pairs(d)
    basis = np.zeros((len(pairs), d, d))
    for k, (i, j) in enumerate(pairs):
        basis[k, i, j] = 1.0
        basis[k, j, i] = -1.0
    return basis


def _lower_index(d):
    rows, cols = np.tril_indices(d, -1)
    return rows, cols


def vec_skew(S):
    """Coordinates of a skew matrix (or a stack of them) in the basis order.

    Accepts ``(d, d)`` or ``(..., d, d)``; returns ``(..., d(d-1)/2)``.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim < 2 or S.shape[-1] != S.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {S.shape}")
    rows, cols = _lower_index(S.shape[-1])
    return S[..., rows, cols]


def unvec_skew(coords, d):
    """Inverse of :func:`vec_skew`."""
    coords = np.asarray(coords, dtype=float)
    K = skew_dim(d)
    if coords.shape[-1:] != (K,):
        raise ValueError(f"so({d}) has {K} coordinates, got trailing shape {coords.shape[-1:]}")
    out = np.zeros(coords.shape[:-1] + (d, d))
    rows, cols = _lower_index(d)
    out[..., rows, cols] = coords
    out[..., cols, rows] = -coords
    return out


def project_skew(M):
    """Skew part ``(M - M^T) / 2`` of a square matrix (or a stack of them)."""
    M = np.asarray(M, dtype=float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {M.shape}")
    return 0.5 * (M - np.swapaxes(M, -1, -2))


def random_skew(d, rng, scale=1.0):
    """Random skew matrix with i.i.d. normal coordinates times ``scale``."""
    return unvec_skew(scale * rng.standard_normal(skew_dim(d)), d)


def _expm_exact(S):
    d = S.shape[0]
    norm = np.abs(S).sum(axis=0).max() if d else 0.0
    squarings = 0
    if norm > _SCALED_NORM:
        squarings = int(math.ceil(math.log2(norm / _SCALED_NORM)))
    A = S / (2.0 ** squarings)
    # Horner evaluation of the Taylor polynomial of degree _TAYLOR_DEGREE
    eye = np.eye(d)
    R = eye.copy()
    for k in range(_TAYLOR_DEGREE, 0, -1):
        R = eye + (A @ R) / k
    for _ in range(squarings):
        R = R @ R
    return R


def _expm_truncated(S, order):
    d = S.shape[0]
    R = np.eye(d)
    term = np.eye(d)
    for k in range(1, order + 1):
        term = term @ S / k
        R = R + term
    return R


def expm_skew(S, mode="exact", order=2):
    """Matrix exponential of a skew matrix.

    Parameters
    ----------
    S : array_like, shape (d, d) or (..., d, d)
        Skew-symmetric generator(s).
    mode : {"exact", "truncated"}
        ``exact`` uses scaling and squaring around a degree-18 Taylor core and
        returns a rotation to machine precision. ``truncated`` returns the power
        series cut after ``order``; the result is only approximately orthogonal,
        with error shrinking like ``|S|^(order+1)``.
    order : int
        Truncation order, used only in truncated mode.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim < 2 or S.shape[-1] != S.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {S.shape}")
    if mode == "exact":
        fn = _expm_exact
    elif mode == "truncated":
        if order < 1:
            raise ValueError(f"truncation order must be >= 1, got {order}")
        fn = lambda A: _expm_truncated(A, order)  # noqa: E731
    else:
        raise ValueError(f"unknown exponential mode {mode!r}")
    if S.ndim == 2:
        return fn(S)
    flat = S.reshape(-1, S.shape[-2], S.shape[-1])
    return np.stack([fn(A) for A in flat]).reshape(S.shape)


def orthogonality_error(R):
    """Frobenius norm of ``R^T R - I``."""
    R = np.asarray(R)
    return float(np.linalg.norm(R.T @ R - np.eye(R.shape[0])))
