"""Benchmark bundles: build a problem from a JSON spec, run optimizers, write outputs.

A bundle directory holds ``manifest.json``, ``spectrum.json``, one
subdirectory per run (``trace.csv``/``trace.json``, ``alignment.json``,
``final_embeddings.npy``) and two SVG charts.
"""
import copy
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .chain import ChainProblem, regularizer_hessian_spectrum_analytic, regularizer_hessian_spectrum_numeric
from .models import generate_ground_truth_sequence
from .optimizer import TRACE_COLUMNS, TrainConfig, inject_goldstone_mode, run_goldstone_gd, run_plain_gd

OPTIMIZERS = {"plain_gd": run_plain_gd, "goldstone_gd": run_goldstone_gd}


class ConfigError(ValueError):
    pass


DEFAULT_BENCH = {
    "problem": {"model": "gram", "d": 8, "n": 16, "T": 32, "lam": 1.0, "drift": 0.01, "seed": 1},
    "init": {"kind": "shared_random", "seed": 2, "scale": 1.0},
    "perturbation": {"wavevector_index": 1, "amplitude": 0.5},
    "runs": [
        {"name": "goldstone", "optimizer": "goldstone_gd",
         "config": {"gd_steps_per_cycle": 50, "gauge_every": 1, "max_cycles": 2000, "grad_tol": 1e-6}},
        {"name": "plain", "optimizer": "plain_gd",
         "config": {"gd_steps_per_cycle": 50, "max_cycles": 2000, "grad_tol": 1e-6},
         "match_budget": {"run": "goldstone", "factor": 10.0}},
    ],
    "timing": True,
    "histogram_bins": 20,
}

DEFAULT_ALIGN = {
    "problem": {"model": "gram", "d": 8, "n": 16, "T": 32, "lam": 1.0, "drift": 0.0, "seed": 3},
    "init": {"kind": "shared_random", "seed": 4, "scale": 1.0},
    "perturbation": {"wavevector_index": 1, "amplitude": 0.5},
    "runs": [
        {"name": "goldstone", "optimizer": "goldstone_gd",
         "config": {"gd_steps_per_cycle": 50, "max_cycles": 2000, "grad_tol": 1e-6}},
        {"name": "plain", "optimizer": "plain_gd",
         "config": {"gd_steps_per_cycle": 50, "max_cycles": 2000, "grad_tol": 1e-6},
         "match_budget": {"run": "goldstone", "factor": 1.0}},
    ],
    "timing": True,
    "histogram_bins": 20,
}


@dataclass
class ExperimentSpec:
    problem: dict
    perturbation: dict
    runs: list
    init: dict = field(default_factory=lambda: {"kind": "ground_truth"})
    outputs: str = None
    timing: bool = True
    histogram_bins: int = 20

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("experiment spec must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown spec keys: {sorted(unknown)}")
        try:
            spec = cls(**copy.deepcopy(raw))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        spec.validate()
        return spec

    @classmethod
    def from_json(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def validate(self):
        p = self.problem
        for key in ("model", "d", "n", "T", "lam", "drift", "seed"):
            if key not in p:
                raise ConfigError(f"problem.{key} is required")
        if p["model"] not in ("gram", "factorization"):
            raise ConfigError(f"unknown model {p['model']!r}")
        if p["d"] < 1 or p["n"] < p["d"] or p["T"] < 2 or p["drift"] < 0 or not p["lam"] > 0:
            raise ConfigError(f"invalid problem sizes {p}")
        nu = self.perturbation.get("wavevector_index", 1)
        if self.perturbation.get("amplitude", 0.0) != 0.0 and not 1 <= nu <= p["T"] - 1:
            raise ConfigError(f"wavevector_index must be in [1, {p['T'] - 1}]")
        if self.init.get("kind", "ground_truth") not in ("ground_truth", "shared_random", "random"):
            raise ConfigError(f"unknown init kind {self.init.get('kind')!r}")
        if not self.runs:
            raise ConfigError("at least one run is required")
        names = set()
        for run in self.runs:
            if run.get("optimizer") not in OPTIMIZERS:
                raise ConfigError(f"unknown optimizer {run.get('optimizer')!r}")
            name = run.get("name", run["optimizer"])
            if name in names:
                raise ConfigError(f"duplicate run name {name!r}")
            names.add(name)
            try:
                TrainConfig(**run.get("config", {}))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"run {name!r}: {exc}") from exc
            match = run.get("match_budget")
            if match is not None and match.get("run") not in names - {name}:
                raise ConfigError(f"run {name!r} matches the budget of an earlier run that does not exist")
        if self.histogram_bins < 1:
            raise ConfigError("histogram_bins must be >= 1")

    def with_seed(self, seed):
        """Copy with the problem seed set to ``seed`` and the init seed to ``seed + 1``."""
        spec = copy.deepcopy(self)
        spec.problem["seed"] = int(seed)
        spec.init["seed"] = int(seed) + 1
        return spec

    def to_dict(self):
        return asdict(self)


@dataclass
class AlignmentReport:
    similarities: list
    bin_edges: list
    counts: list
    mean: float
    median: float
    degenerate: int

    def to_dict(self):
        return asdict(self)


def alignment_report(Z, bins=20):
    """Cosine similarity of each column between the first and the last frame.

    Columns with a zero-norm side score 0 and are counted in ``degenerate``.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 3 or Z.shape[0] < 2 or Z.shape[2] < 1:
        raise ValueError(f"expected a (T >= 2, d, n >= 1) sequence, got {Z.shape}")
    first, last = Z[0], Z[-1]
    norms = np.linalg.norm(first, axis=0) * np.linalg.norm(last, axis=0)
    dots = np.sum(first * last, axis=0)
    ok = norms > 0
    sims = np.zeros(Z.shape[2])
    sims[ok] = np.clip(dots[ok] / norms[ok], -1.0, 1.0)
    counts, edges = np.histogram(sims, bins=bins, range=(-1.0, 1.0))
    return AlignmentReport(
        similarities=sims.tolist(),
        bin_edges=edges.tolist(),
        counts=counts.tolist(),
        mean=float(np.mean(sims)),
        median=float(np.median(sims)),
        degenerate=int(np.count_nonzero(~ok)),
    )


def build_problem(spec):
    p = spec.problem
    Z_star, model = generate_ground_truth_sequence(
        p["d"], p["n"], p["T"], p["drift"], p["seed"], model=p["model"], n_u=p.get("n_u"),
    )
    problem = ChainProblem(model, float(p["lam"]))
    init = spec.init
    kind = init.get("kind", "ground_truth")
    rng = np.random.default_rng(init.get("seed", 0))
    scale = float(init.get("scale", 1.0))
    T, d, n = Z_star.shape
    if kind == "ground_truth":
        Z0 = Z_star.copy()
    elif kind == "shared_random":
        Z0 = np.repeat(scale * rng.standard_normal((1, d, n)), T, axis=0)
    else:
        Z0 = scale * rng.standard_normal((T, d, n))
    amplitude = float(spec.perturbation.get("amplitude", 0.0))
    if amplitude != 0.0:
        Z0 = inject_goldstone_mode(Z0, amplitude, spec.perturbation.get("wavevector_index", 1))
    return problem, Z_star, Z0


def spectrum_payload(T, lam):
    analytic = regularizer_hessian_spectrum_analytic(T, lam)
    numeric = regularizer_hessian_spectrum_numeric(T, lam)
    deviation = float(np.max(np.abs(np.array(analytic.eigenvalues) - np.array(numeric.eigenvalues))))
    return {
        "T": int(T),
        "lam": float(lam),
        "multiplicity_note": "scalar chain; the full regularizer Hessian repeats each eigenvalue d*n times",
        "analytic": analytic.to_dict(),
        "numeric": numeric.to_dict(),
        "max_abs_deviation": deviation,
    }


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _plot(traces, column, path, title):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "goldstone-gd"
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for name, trace in traces.items():
        gd = [r for r in trace.records if r[1] == "gd"]
        ys = np.array([r[TRACE_COLUMNS.index(column)] for r in gd])
        ax.plot([r[2] for r in gd], np.maximum(ys, 1e-300), label=name, lw=1.2)
    ax.set_yscale("log")
    ax.set_xlabel("gradient step")
    ax.set_ylabel(column.replace("_", " "))
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def run_experiment(spec, out_dir=None, formats=("csv", "json")):
    """Run every configured optimizer and write the bundle.

    Returns the manifest dict. A failing run is recorded in the manifest under
    ``errors`` and sets ``exit_code`` to 3; later runs still execute.
    """
    out = Path(out_dir or spec.outputs or "goldstone_bench")
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc

    problem, Z_star, Z0 = build_problem(spec)
    files = []

    spectrum_path = out / "spectrum.json"
    _write_text(spectrum_path, json.dumps(spectrum_payload(spec.problem["T"], spec.problem["lam"]), indent=2))
    files.append(spectrum_path)

    traces, summaries, errors = {}, {}, []
    for run in spec.runs:
        name = run.get("name", run["optimizer"])
        cfg_dict = dict(run.get("config", {}))
        cfg_dict.setdefault("record_wall_time", bool(spec.timing))
        match = run.get("match_budget")
        if match is not None:
            ref = summaries.get(match["run"])
            if ref is None:
                errors.append({"run": name, "error": f"budget reference {match['run']!r} did not finish"})
                continue
            budget = max(1, int(math.ceil(float(match.get("factor", 1.0)) * ref["steps"])))
            cfg_dict["gd_steps_per_cycle"] = budget
            cfg_dict["max_cycles"] = 1
        cfg = TrainConfig(**cfg_dict)
        run_dir = out / name
        run_dir.mkdir(exist_ok=True)
        try:
            Z_final, trace = OPTIMIZERS[run["optimizer"]](problem, Z0, cfg)
        except Exception as exc:  # recorded, not fatal for the bundle
            errors.append({"run": name, "error": f"{type(exc).__name__}: {exc}"})
            continue
        traces[name] = trace
        if "csv" in formats:
            path = run_dir / "trace.csv"
            _write_text(path, trace.to_csv())
            files.append(path)
        if "json" in formats:
            path = run_dir / "trace.json"
            _write_text(path, trace.to_json())
            files.append(path)
        align = alignment_report(Z_final, spec.histogram_bins)
        path = run_dir / "alignment.json"
        _write_text(path, json.dumps(align.to_dict(), indent=2))
        files.append(path)
        path = run_dir / "final_embeddings.npy"
        np.save(path, Z_final)
        files.append(path)
        final = trace.final
        summaries[name] = {
            "optimizer": run["optimizer"],
            "config": cfg.to_dict(),
            "status": trace.status,
            "steps": trace.steps,
            "gauge_phases": len(trace.gauge_reports),
            "step_size": trace.step_size,
            "final_total_loss": final["total_loss"],
            "final_grad_norm": final["grad_norm"],
            "steps_to_grad_tol": trace.first_step_below(cfg.grad_tol),
            "alignment_mean": align.mean,
            "alignment_median": align.median,
        }

    if traces:
        for column, fname, title in (
            ("total_loss", "loss.svg", "total loss"),
            ("grad_norm", "grad_norm.svg", "gradient norm"),
        ):
            path = out / fname
            _plot(traces, column, path, title)
            files.append(path)

    manifest = {
        "library": "goldstone_gd",
        "version": __version__,
        "backend": BACKEND,
        "spec": spec.to_dict(),
        "seeds": {
            "problem": spec.problem["seed"],
            "init": spec.init.get("seed"),
            "runs": {r.get("name", r["optimizer"]): r.get("config", {}).get("seed", 0) for r in spec.runs},
        },
        "runs": summaries,
        "comparison": _compare(summaries),
        "errors": errors,
        "exit_code": 3 if errors else 0,
        "files": [
            {"path": os.path.relpath(p, out), "sha256": _digest(p)} for p in files
        ],
    }
    _write_text(out / "manifest.json", json.dumps(manifest, indent=2))
    return manifest


def _compare(summaries):
    if "goldstone" not in summaries or "plain" not in summaries:
        return {}
    g, p = summaries["goldstone"], summaries["plain"]
    return {
        "goldstone_final_loss_below_plain": g["final_total_loss"] < p["final_total_loss"],
        "goldstone_steps_to_tol": g["steps_to_grad_tol"],
        "plain_steps_to_tol": p["steps_to_grad_tol"],
        "plain_budget": p["config"]["gd_steps_per_cycle"] * p["config"]["max_cycles"],
        "plain_steps": p["steps"],
        "alignment_mean_goldstone": g["alignment_mean"],
        "alignment_mean_plain": p["alignment_mean"],
    }
