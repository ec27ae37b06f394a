"""Quadratic gauge objective over per-timestep skew generators and its solvers.

For a sequence ``Z`` the couplings ``M_t = Z_{t-1} Z_t^T`` are computed once.
The objective over a skew field ``Gamma`` is

    sum_t Tr[(D_t - D_t^2 / 2) M_t],    D_t = Gamma_t - Gamma_{t-1}

which, multiplied by ``lam``, is the second-order expansion of the spring
energy of the rotated frames ``exp(Gamma_t) Z_t`` minus its value at
``Gamma = 0`` (up to commutator terms that vanish when the generators commute).
It depends only on differences, so ``Gamma_1`` is pinned to zero.

In skew coordinates ``c_t`` and ``delta_l = c_{l+1} - c_l`` the objective reads
``sum_l g_l . delta_l + 1/2 delta_l^T H_l delta_l`` with
``g_l[k] = Tr[B_k M_l]`` and ``H_l[i, j] = -1/2 Tr[(B_i B_j + B_j B_i) M_l]``,
a block-tridiagonal quadratic over the frames ``2 .. T``.
"""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .so_algebra import expm_skew, project_skew, skew_dim, unvec_skew, vec_skew


class SingularSystem(np.linalg.LinAlgError):
    """The assembled gauge system is not positive definite beyond the pinned frame."""


class NonConvergence(RuntimeError):
    def __init__(self, message, report=None, field=None):
        super().__init__(message)
        self.report = report
        self.field = field


@dataclass
class GaugeSolveReport:
    objective_initial: float
    objective_final: float
    solver: str
    iterations: int
    residual: float
    rank_deficient: bool = False
    min_pivot: float = float("nan")
    objective_history: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def precompute_couplings(Z):
    """``M[t-1] = Z_{t-1} Z_t^T`` for consecutive frames, shape ``(T-1, d, d)``."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 3 or Z.shape[0] < 2:
        raise ValueError(f"expected a (T, d, n) sequence with T >= 2, got {Z.shape}")
    return np.matmul(Z[:-1], Z[1:].transpose(0, 2, 1))


def _check_field(Gamma, M):
    Gamma = np.asarray(Gamma, dtype=float)
    M = np.asarray(M, dtype=float)
    if Gamma.ndim != 3 or M.ndim != 3:
        raise ValueError("field must be (T, d, d) and couplings (T-1, d, d)")
    if Gamma.shape[0] != M.shape[0] + 1 or Gamma.shape[1:] != M.shape[1:]:
        raise ValueError(f"field {Gamma.shape} does not match couplings {M.shape}")
    return Gamma, M


def gauge_objective(Gamma, M):
    Gamma, M = _check_field(Gamma, M)
    D = Gamma[1:] - Gamma[:-1]
    A = D - 0.5 * np.matmul(D, D)
    return float(np.einsum("lab,lba->", A, M))


def gauge_objective_grad(Gamma, M):
    """Gradient as a skew field: the Euclidean gradient per block, projected.

    The directional derivative along a skew direction ``S`` is ``<grad, S>_F``;
    along basis element ``B_k`` of frame ``t`` that is ``2 * vec_skew(grad[t])[k]``.
    """
    Gamma, M = _check_field(Gamma, M)
    D = Gamma[1:] - Gamma[:-1]
    Mt = M.transpose(0, 2, 1)
    Dt = D.transpose(0, 2, 1)
    dD = Mt - 0.5 * (np.matmul(Mt, Dt) + np.matmul(Dt, Mt))
    grad = np.zeros_like(Gamma)
    grad[1:] += dD
    grad[:-1] -= dD
    return project_skew(grad)


def assemble_gauge_system(M):
    """Block-tridiagonal system for the coordinates of frames ``2 .. T``.

    Returns ``(diag, off, rhs)`` where the quadratic is
    ``1/2 x^T A x + rhs . x``; ``diag`` is ``(T-1, K, K)``, ``off[s]`` is the
    block coupling unknowns ``s`` and ``s+1``.
    """
    M = np.ascontiguousarray(M, dtype=float)
    g, H = kernels.gauge_blocks(M)
    L, K = g.shape
    diag = H.copy()
    diag[:-1] += H[1:]
    off = -H[1:].copy()
    rhs = g.copy()
    rhs[:-1] -= g[1:]
    return diag, off, rhs


def _quadratic_value(diag, off, rhs, x):
    Ax = kernels.block_tridiag_matvec(diag, off, x)
    return float(0.5 * np.sum(x * Ax) + np.sum(rhs * x))


def _coords_to_field(x, d):
    T = x.shape[0] + 1
    Gamma = np.zeros((T, d, d))
    Gamma[1:] = unvec_skew(x, d)
    return Gamma


def _pivot_floor(diag):
    scale = float(np.max(np.abs(diag))) if diag.size else 0.0
    return 1e-11 * scale, scale


def solve_gauge_direct(M):
    """Minimize the gauge objective by solving its stationarity system.

    Raises :class:`SingularSystem` when a Schur complement of the block
    elimination is not positive definite, i.e. the couplings leave null or
    negative-curvature directions besides the pinned frame.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 3 or M.shape[1] != M.shape[2]:
        raise ValueError(f"couplings must be (T-1, d, d), got {M.shape}")
    d = M.shape[1]
    if skew_dim(d) == 0:
        field_ = np.zeros((M.shape[0] + 1, d, d))
        return field_, GaugeSolveReport(0.0, 0.0, "direct", 0, 0.0)
    diag, off, rhs = assemble_gauge_system(M)
    floor, scale = _pivot_floor(diag)
    if scale == 0.0:
        raise SingularSystem("all couplings vanish")
    x, min_pivot, ok = kernels.block_tridiag_solve(diag, off, -rhs, floor)
    if not ok:
        raise SingularSystem(
            f"gauge system is not positive definite (smallest pivot {min_pivot:.3e}, floor {floor:.3e})"
        )
    resid = kernels.block_tridiag_matvec(diag, off, x) + rhs
    report = GaugeSolveReport(
        objective_initial=0.0,
        objective_final=_quadratic_value(diag, off, rhs, x),
        solver="direct",
        iterations=1,
        residual=float(np.linalg.norm(resid)),
        min_pivot=float(min_pivot),
    )
    return _coords_to_field(x, d), report


def _make_preconditioner(diag, off, precond, ridge):
    K = diag.shape[1]
    eye = np.eye(K)
    bump = ridge
    for _ in range(8):
        shifted = np.ascontiguousarray(diag + bump * eye)
        if precond == "full":
            probe = np.zeros((diag.shape[0], K))
            _, _, ok = kernels.block_tridiag_solve(shifted, off, probe, 0.0)
            if ok:
                return (lambda r, A=shifted: kernels.block_tridiag_solve(A, off, r, -np.inf)[0]), bump
        elif precond == "block_jacobi":
            if all(np.linalg.eigvalsh(block)[0] > 0 for block in shifted):
                inv = np.linalg.inv(shifted)
                return (lambda r, inv=inv: np.einsum("sij,sj->si", inv, r)), bump
        else:
            raise ValueError(f"unknown preconditioner {precond!r}")
        bump = max(bump * 100.0, 1e-12)
    raise SingularSystem("could not stabilize the preconditioner with a ridge")


def solve_gauge_descent(M, precond="full", max_iter=500, tol=1e-10, ridge=1e-10):
    """Preconditioned descent on the gauge objective, starting from ``Gamma = 0``.

    ``precond="full"`` uses the inverse of the ridge-stabilized assembled
    quadratic form (natural-gradient style); ``"block_jacobi"`` inverts only the
    per-frame diagonal blocks. Step lengths come from an exact line search, so
    the objective never increases. ``tol`` bounds the gradient norm in
    coordinates.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 3 or M.shape[1] != M.shape[2]:
        raise ValueError(f"couplings must be (T-1, d, d), got {M.shape}")
    d = M.shape[1]
    if skew_dim(d) == 0:
        field_ = np.zeros((M.shape[0] + 1, d, d))
        return field_, GaugeSolveReport(0.0, 0.0, "preconditioned_descent", 0, 0.0)
    diag, off, rhs = assemble_gauge_system(M)
    floor, scale = _pivot_floor(diag)
    apply_precond, used_ridge = _make_preconditioner(diag, off, precond, ridge * max(1.0, scale))
    _, min_pivot, ok = kernels.block_tridiag_solve(diag, off, np.zeros_like(rhs), floor)

    x = np.zeros_like(rhs)
    grad = rhs.copy()
    history = [0.0]
    iterations = 0
    while np.linalg.norm(grad) > tol and iterations < max_iter:
        p = -apply_precond(grad)
        Ap = kernels.block_tridiag_matvec(diag, off, p)
        curvature = float(np.sum(p * Ap))
        slope = float(np.sum(grad * p))
        if curvature <= 0.0 or slope >= 0.0:
            break
        x = x + (-slope / curvature) * p
        grad = kernels.block_tridiag_matvec(diag, off, x) + rhs
        history.append(_quadratic_value(diag, off, rhs, x))
        iterations += 1

    report = GaugeSolveReport(
        objective_initial=0.0,
        objective_final=history[-1],
        solver="preconditioned_descent",
        iterations=iterations,
        residual=float(np.linalg.norm(grad)),
        rank_deficient=not ok,
        min_pivot=float(min_pivot),
        objective_history=history,
    )
    field_ = _coords_to_field(x, d)
    if report.residual > tol:
        raise NonConvergence(
            f"gradient norm {report.residual:.3e} above tol {tol:.1e} after {iterations} iterations",
            report=report,
            field=field_,
        )
    return field_, report


def apply_gauge(Z, Gamma, mode="exact", order=2):
    """Rotate every frame: ``Z_t <- expm(Gamma_t) Z_t``."""
    Z = np.asarray(Z, dtype=float)
    Gamma = np.asarray(Gamma, dtype=float)
    if Z.ndim != 3 or Gamma.shape != (Z.shape[0], Z.shape[1], Z.shape[1]):
        raise ValueError(f"field {Gamma.shape} does not match sequence {Z.shape}")
    R = expm_skew(Gamma, mode=mode, order=order)
    return np.matmul(R, Z)


def field_coordinates(Gamma):
    """Skew coordinates of frames ``2 .. T`` (frame 1 is the pinned gauge)."""
    return vec_skew(np.asarray(Gamma)[1:])
