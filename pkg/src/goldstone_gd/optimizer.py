"""Plain gradient descent and Goldstone-GD on a :class:`ChainProblem`.

Goldstone-GD runs cycles of ``gd_steps_per_cycle`` fixed-step GD updates and,
every ``gauge_every`` cycles, one gauge phase: couplings -> quadratic gauge
solve -> rotate frames. Only GD updates count as steps; gauge phases appear in
the trace as separate ``phase="gauge"`` records carrying the current step.
"""
import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .chain import ChainProblem, evaluate, total_loss
from .gauge import (
    NonConvergence,
    SingularSystem,
    apply_gauge,
    precompute_couplings,
    solve_gauge_descent,
    solve_gauge_direct,
)
from .so_algebra import expm_skew, skew_basis, skew_dim

TRACE_COLUMNS = (
    "cycle", "phase", "step", "total_loss", "local_loss_sum", "regularizer", "grad_norm", "wall_time_s",
)


class Divergence(RuntimeError):
    pass


class GaugePhaseError(RuntimeError):
    def __init__(self, cycle, cause):
        super().__init__(f"gauge phase failed in cycle {cycle}: {cause}")
        self.cycle = cycle
        self.cause = cause


@dataclass
class TrainConfig:
    step_size: float = None
    gd_steps_per_cycle: int = 50
    gauge_every: int = 1
    max_cycles: int = 1000
    grad_tol: float = 1e-6
    gauge_solver: str = "direct"
    apply_mode: str = "exact"
    truncation_order: int = 2
    seed: int = 0
    record_wall_time: bool = True

    def __post_init__(self):
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        for name in ("gd_steps_per_cycle", "gauge_every", "max_cycles", "truncation_order"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.gauge_solver not in ("direct", "preconditioned_descent"):
            raise ValueError(f"unknown gauge solver {self.gauge_solver!r}")
        if self.apply_mode not in ("exact", "truncated"):
            raise ValueError(f"unknown apply mode {self.apply_mode!r}")

    def to_dict(self):
        return asdict(self)


@dataclass
class ConvergenceTrace:
    optimizer: str
    step_size: float
    records: list = field(default_factory=list)
    status: str = "running"
    gauge_reports: list = field(default_factory=list)

    def append(self, cycle, phase, step, local, reg, grad_norm, wall):
        self.records.append((int(cycle), phase, int(step), local + reg, local, reg, grad_norm, wall))

    @property
    def steps(self):
        return self.records[-1][2] if self.records else 0

    @property
    def final(self):
        return dict(zip(TRACE_COLUMNS, self.records[-1]))

    def column(self, name):
        k = TRACE_COLUMNS.index(name)
        return np.array([r[k] for r in self.records])

    def first_step_below(self, grad_tol):
        """Step count of the first record with ``grad_norm <= grad_tol``, else None."""
        for r in self.records:
            if r[6] <= grad_tol:
                return r[2]
        return None

    def to_csv(self, fh=None):
        own = fh is None
        fh = io.StringIO() if own else fh
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in self.records:
            writer.writerow([r[0], r[1], r[2]] + [repr(float(v)) for v in r[3:]])
        return fh.getvalue() if own else None

    def to_dict(self):
        return {
            "optimizer": self.optimizer,
            "step_size": self.step_size,
            "status": self.status,
            "columns": list(TRACE_COLUMNS),
            "records": [list(r) for r in self.records],
            "gauge_reports": self.gauge_reports,
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def inject_goldstone_mode(Z, amplitude, wavevector_index, generator=None):
    """Rotate frame ``t`` by ``exp(a cos(q_nu (t - 1/2)) B)``, ``t = 1 .. T``.

    ``B`` defaults to the first basis generator scaled to unit Frobenius norm.
    """
    Z = np.asarray(Z, dtype=float)
    T, d, _ = Z.shape
    nu = int(wavevector_index)
    if not 1 <= nu <= T - 1:
        raise ValueError(f"wavevector index must be in [1, {T - 1}], got {wavevector_index}")
    if d < 2:
        raise ValueError("a Goldstone mode needs d >= 2")
    B = skew_basis(d)[0] / np.sqrt(2.0) if generator is None else np.asarray(generator, dtype=float)
    angles = amplitude * np.cos(np.pi * nu / T * (np.arange(1, T + 1) - 0.5))
    R = expm_skew(angles[:, None, None] * B[None])
    return np.matmul(R, Z)


def local_curvature_probe(problem, Z, seed=0, iterations=20, eps=1e-6):
    """Power-iteration estimate of the largest local-loss Hessian eigenvalue."""
    model = problem.model
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(Z.shape)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(iterations):
        hv = (model.grads(Z + eps * v) - model.grads(Z - eps * v)) / (2.0 * eps)
        estimate = float(np.linalg.norm(hv))
        if estimate == 0.0:
            return 0.0
        v = hv / estimate
    return estimate


def default_step_size(problem, Z0, seed=0):
    """``0.5 / h_max`` with ``h_max`` = top spring eigenvalue + local curvature probe."""
    T = problem.timesteps
    spring_top = (2.0 - 2.0 * np.cos(np.pi * (T - 1) / T)) * problem.lam
    return 0.5 / (spring_top + local_curvature_probe(problem, np.asarray(Z0, dtype=float), seed))


@dataclass
class GaugePhaseResult:
    Z: np.ndarray
    report: object
    scale: float
    loss_before: float
    loss_after: float


def gauge_phase(problem, Z, solver="direct", mode="exact", order=2):
    """One gauge phase with a monotone safeguard.

    The solved field is applied at full strength if that does not raise the
    total loss, otherwise halved up to four times; if every trial raises the
    loss the sequence is returned unchanged (``scale == 0``).
    """
    M = precompute_couplings(Z)
    try:
        if solver == "direct":
            Gamma, report = solve_gauge_direct(M)
        else:
            Gamma, report = solve_gauge_descent(M)
    except SingularSystem:
        try:
            Gamma, report = solve_gauge_descent(M)
        except NonConvergence as exc:
            Gamma, report = exc.field, exc.report
        report.rank_deficient = True
    except NonConvergence as exc:
        Gamma, report = exc.field, exc.report

    before = total_loss(problem, Z)
    for scale in (1.0, 0.5, 0.25, 0.125, 0.0625):
        candidate = apply_gauge(Z, scale * Gamma, mode=mode, order=order)
        after = total_loss(problem, candidate)
        if after <= before:
            return GaugePhaseResult(candidate, report, scale, before, after)
    return GaugePhaseResult(np.array(Z, copy=True), report, 0.0, before, before)


def _run(problem, Z0, cfg, goldstone):
    if not isinstance(problem, ChainProblem):
        raise TypeError("problem must be a ChainProblem")
    Z = np.array(problem.check(Z0), dtype=float, copy=True)
    eta = cfg.step_size if cfg.step_size is not None else default_step_size(problem, Z, cfg.seed)
    trace = ConvergenceTrace("goldstone_gd" if goldstone else "plain_gd", float(eta))
    use_gauge = goldstone and skew_dim(Z.shape[1]) > 0
    clock = time.perf_counter
    start = clock()
    wall = (lambda: clock() - start) if cfg.record_wall_time else (lambda: 0.0)

    local, reg, grad = evaluate(problem, Z)
    gnorm = float(np.linalg.norm(grad))
    initial = local + reg
    trace.append(0, "gd", 0, local, reg, gnorm, wall())
    if gnorm <= cfg.grad_tol:
        trace.status = "converged"
        return Z, trace

    step = 0
    for cycle in range(cfg.max_cycles):
        for _ in range(cfg.gd_steps_per_cycle):
            Z -= eta * grad
            step += 1
            local, reg, grad = evaluate(problem, Z)
            gnorm = float(np.linalg.norm(grad))
            trace.append(cycle, "gd", step, local, reg, gnorm, wall())
            total = local + reg
            if not np.isfinite(total) or (initial > 0 and total > 10.0 * initial):
                trace.status = "diverged"
                raise Divergence(f"{trace.optimizer} diverged at step {step}: total loss {total:.3e}")
            if gnorm <= cfg.grad_tol:
                trace.status = "converged"
                return Z, trace
        if use_gauge and (cycle + 1) % cfg.gauge_every == 0:
            try:
                result = gauge_phase(problem, Z, cfg.gauge_solver, cfg.apply_mode, cfg.truncation_order)
            except Exception as exc:
                trace.status = "error"
                raise GaugePhaseError(cycle, exc) from exc
            Z = result.Z
            trace.gauge_reports.append(
                {"cycle": cycle, "step": step, "scale": result.scale, **result.report.to_dict()}
            )
            local, reg, grad = evaluate(problem, Z)
            gnorm = float(np.linalg.norm(grad))
            trace.append(cycle, "gauge", step, local, reg, gnorm, wall())
            if gnorm <= cfg.grad_tol:
                trace.status = "converged"
                return Z, trace
    trace.status = "max_cycles"
    return Z, trace


def run_plain_gd(problem, Z0, cfg):
    """Fixed-step gradient descent for up to ``max_cycles * gd_steps_per_cycle`` steps."""
    return _run(problem, Z0, cfg, goldstone=False)


def run_goldstone_gd(problem, Z0, cfg):
    """Goldstone-GD: GD cycles interleaved with gauge phases."""
    return _run(problem, Z0, cfg, goldstone=True)
