"""Total time-series objective and the spring-chain spectrum of its regularizer.

The objective is the sum of local losses plus ``lam/2 * sum_t ||Z_t - Z_{t-1}||^2``
with free ends. In the scalar chain picture the regularizer Hessian is the
T x T path-graph Laplacian times ``lam``; the full Hessian repeats that spectrum
``d * n`` times.
"""
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import kernels
from .models import LocalLossModel


@dataclass(frozen=True)
class ChainProblem:
    model: LocalLossModel
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"coupling strength must be positive, got {self.lam}")
        if self.model.timesteps < 2:
            raise ValueError("a chain needs at least two timesteps")

    @property
    def timesteps(self):
        return self.model.timesteps

    def check(self, Z):
        Z = np.asarray(Z, dtype=float)
        if Z.ndim != 3 or Z.shape[0] != self.timesteps:
            raise ValueError(f"expected a ({self.timesteps}, d, n) sequence, got {Z.shape}")
        return Z


def evaluate(problem, Z):
    """Return ``(local_loss_sum, regularizer, grad)`` in one pass."""
    Z = np.ascontiguousarray(problem.check(Z))
    losses, grad = problem.model.value_and_grad(Z)
    grad = np.array(grad, copy=True)
    reg = kernels.spring_value_grad(Z, float(problem.lam), grad)
    return float(np.sum(losses)), float(reg), grad


def regularizer(Z, lam):
    Z = np.asarray(Z, dtype=float)
    diff = Z[1:] - Z[:-1]
    return 0.5 * lam * float(np.sum(diff * diff))


def loss_terms(problem, Z):
    Z = problem.check(Z)
    return float(np.sum(problem.model.values(Z))), regularizer(Z, problem.lam)


def total_loss(problem, Z):
    local, reg = loss_terms(problem, Z)
    return local + reg


def total_loss_grad(problem, Z):
    return evaluate(problem, Z)[2]


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: list
    wavevectors: list
    condition_number: float

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def _check_chain(T, lam):
    if int(T) != T or T < 2:
        raise ValueError(f"chain length must be an integer >= 2, got {T}")
    if not lam > 0:
        raise ValueError(f"coupling strength must be positive, got {lam}")


def _report(eigs, T):
    eigs = np.sort(np.asarray(eigs, dtype=float))
    q = np.pi * np.arange(T) / T
    return SpectrumReport(
        eigenvalues=eigs.tolist(),
        wavevectors=q.tolist(),
        condition_number=float(eigs[-1] / eigs[1]),
    )


def regularizer_hessian_spectrum_analytic(T, lam):
    """``h_nu = (2 - 2 cos(pi nu / T)) * lam`` for ``nu = 0 .. T-1``."""
    _check_chain(T, lam)
    q = np.pi * np.arange(T) / T
    h = (2.0 - 2.0 * np.cos(q)) * lam
    return SpectrumReport(
        eigenvalues=h.tolist(),
        wavevectors=q.tolist(),
        condition_number=float(h[-1] / h[1]),
    )


def spring_chain_matrix(T, lam):
    """Dense free-end spring matrix; diagonal ``lam * (1, 2, ..., 2, 1)``."""
    _check_chain(T, lam)
    main = np.full(T, 2.0 * lam)
    main[0] = main[-1] = lam
    return np.diag(main) + np.diag(np.full(T - 1, -lam), 1) + np.diag(np.full(T - 1, -lam), -1)


def regularizer_hessian_spectrum_numeric(T, lam):
    """Eigenvalues of the spring matrix from a tridiagonal eigensolver."""
    _check_chain(T, lam)
    main = np.full(T, 2.0 * lam)
    main[0] = main[-1] = lam
    eigs = eigh_tridiagonal(main, np.full(T - 1, -lam), eigvals_only=True)
    return _report(eigs, T)


def spring_mode(T, nu):
    """Unit-norm chain eigenvector ``cos(q_nu (t - 1/2))``, ``t = 1 .. T``."""
    t = np.arange(1, T + 1)
    v = np.cos(np.pi * nu / T * (t - 0.5))
    return v / np.linalg.norm(v)
