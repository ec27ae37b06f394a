"""Goldstone-GD: gradient descent with gauge phases for rotation-symmetric time-series models."""
from ._backend import BACKEND
from .chain import (
    ChainProblem,
    SpectrumReport,
    regularizer_hessian_spectrum_analytic,
    regularizer_hessian_spectrum_numeric,
    total_loss,
    total_loss_grad,
)
from .gauge import (
    GaugeSolveReport,
    NonConvergence,
    SingularSystem,
    apply_gauge,
    gauge_objective,
    gauge_objective_grad,
    precompute_couplings,
    solve_gauge_descent,
    solve_gauge_direct,
)
from .models import (
    FactorizationModel,
    GramModel,
    NullModel,
    generate_ground_truth_sequence,
)
from .optimizer import (
    ConvergenceTrace,
    Divergence,
    TrainConfig,
    gauge_phase,
    inject_goldstone_mode,
    run_goldstone_gd,
    run_plain_gd,
)
from .so_algebra import expm_skew, project_skew, skew_basis, unvec_skew, vec_skew

__version__ = "0.1.0"
