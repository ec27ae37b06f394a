import json

import numpy as np
import pytest

from goldstone_gd.chain import ChainProblem, loss_terms, regularizer, total_loss
from goldstone_gd.gauge import (
    NonConvergence,
    SingularSystem,
    apply_gauge,
    assemble_gauge_system,
    gauge_objective,
    gauge_objective_grad,
    precompute_couplings,
    solve_gauge_descent,
    solve_gauge_direct,
)
from goldstone_gd.models import NullModel, generate_ground_truth_sequence
from goldstone_gd.optimizer import inject_goldstone_mode
from goldstone_gd.oracle import brute_force_gauge
from goldstone_gd.so_algebra import random_skew, skew_basis, skew_dim, unvec_skew, vec_skew


def random_field(T, d, rng, scale=1.0):
    return np.stack([random_skew(d, rng, scale) for _ in range(T)])


def perturbed_sequence(seed, d=3, n=5, T=6, drift=0.1, amplitude=0.3):
    Z_star, model = generate_ground_truth_sequence(d, n, T, drift, seed=seed)
    return inject_goldstone_mode(Z_star, amplitude, 1), model


def quadratic_by_loops(Gamma, M):
    """Independent evaluation through per-basis traces, not the kernels."""
    d = M.shape[1]
    B = skew_basis(d)
    c = vec_skew(Gamma)
    total = 0.0
    for l in range(M.shape[0]):
        delta = c[l + 1] - c[l]
        g = np.array([np.trace(Bk @ M[l]) for Bk in B])
        H = np.array([[-0.5 * np.trace((Bi @ Bj + Bj @ Bi) @ M[l]) for Bj in B] for Bi in B])
        total += g @ delta + 0.5 * delta @ H @ delta
    return total


def test_couplings(rng):
    Z = rng.standard_normal((4, 3, 6))
    M = precompute_couplings(Z)
    for t in range(1, 4):
        np.testing.assert_allclose(M[t - 1], sum(np.outer(Z[t - 1][:, a], Z[t][:, a]) for a in range(6)),
                                   rtol=1e-12)
    same = precompute_couplings(np.repeat(Z[:1], 3, axis=0))
    np.testing.assert_allclose(same, np.broadcast_to(Z[0] @ Z[0].T, same.shape))
    np.testing.assert_allclose(same, same.transpose(0, 2, 1))
    scalar = precompute_couplings(rng.standard_normal((3, 1, 4)))
    assert scalar.shape == (2, 1, 1)
    with pytest.raises(ValueError):
        precompute_couplings(np.zeros((1, 2, 2)))


def test_objective_trivial_values(rng):
    M = rng.standard_normal((4, 3, 3))
    assert gauge_objective(np.zeros((5, 3, 3)), M) == 0.0
    S = random_skew(3, rng)
    assert gauge_objective(np.repeat(S[None], 5, axis=0), M) == 0.0
    with pytest.raises(ValueError):
        gauge_objective(np.zeros((4, 3, 3)), M)


def test_objective_single_step_so2(rng):
    M = rng.standard_normal((1, 2, 2))
    B = skew_basis(2)[0]
    theta = 0.37
    Gamma = np.stack([np.zeros((2, 2)), theta * B])
    expected = theta * np.trace(B @ M[0]) - theta**2 / 2 * np.trace(B @ B @ M[0])
    assert gauge_objective(Gamma, M) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_objective_equals_coordinate_quadratic(seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((3, 4, 4))
    Gamma = random_field(4, 4, rng)
    assert gauge_objective(Gamma, M) == pytest.approx(quadratic_by_loops(Gamma, M), rel=1e-12)
    diag, off, rhs = assemble_gauge_system(M)
    x = vec_skew(Gamma[1:] - Gamma[0])
    A = np.zeros((3 * 6, 3 * 6))
    for s in range(3):
        A[6 * s:6 * s + 6, 6 * s:6 * s + 6] = diag[s]
        if s < 2:
            A[6 * s:6 * s + 6, 6 * s + 6:6 * s + 12] = off[s]
            A[6 * s + 6:6 * s + 12, 6 * s:6 * s + 6] = off[s].T
    np.testing.assert_allclose(A, A.T, atol=1e-12)
    val = 0.5 * x.ravel() @ A @ x.ravel() + rhs.ravel() @ x.ravel()
    assert val == pytest.approx(gauge_objective(Gamma, M), rel=1e-11)


@pytest.mark.parametrize("seed", range(20))
def test_zero_mode_invariance(seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((5, 3, 3))
    Gamma = random_field(6, 3, rng)
    S = random_skew(3, rng)
    a = gauge_objective(Gamma, M)
    assert abs(gauge_objective(Gamma + S, M) - a) <= 1e-12 * max(1.0, abs(a))


@pytest.mark.parametrize("seed", range(5))
def test_gradient_along_every_basis_direction(seed):
    rng = np.random.default_rng(seed)
    T, d = 4, 3
    M = rng.standard_normal((T - 1, d, d))
    Gamma = random_field(T, d, rng, 0.5)
    grad = gauge_objective_grad(Gamma, M)
    np.testing.assert_allclose(grad, -grad.transpose(0, 2, 1))
    B = skew_basis(d)
    h = 1e-6
    analytic, numeric = [], []
    for t in range(T):
        for k in range(skew_dim(d)):
            E = np.zeros_like(Gamma)
            E[t] = B[k]
            numeric.append((gauge_objective(Gamma + h * E, M) - gauge_objective(Gamma - h * E, M)) / (2 * h))
            analytic.append(np.sum(grad[t] * B[k]))
    analytic, numeric = np.array(analytic), np.array(numeric)
    assert np.linalg.norm(analytic - numeric) <= 1e-6 * np.linalg.norm(numeric)
    # directional derivative along the constant field vanishes
    S = random_skew(d, rng)
    assert abs(np.sum(grad * S[None])) <= 1e-12 * np.abs(grad).sum()


def test_gradient_vanishes_for_symmetric_couplings(rng):
    A = rng.standard_normal((3, 3, 3))
    M = A + A.transpose(0, 2, 1)
    np.testing.assert_allclose(gauge_objective_grad(np.zeros((4, 3, 3)), M), 0.0, atol=1e-15)


def test_direct_symmetric_couplings_give_zero_field(rng):
    W = rng.standard_normal((4, 3, 7))
    M = np.matmul(W, W.transpose(0, 2, 1))
    Gamma, report = solve_gauge_direct(M)
    np.testing.assert_allclose(Gamma, 0.0, atol=1e-14)
    assert report.objective_final <= report.objective_initial + 1e-12


def test_direct_so2_single_link_closed_form(rng):
    W = rng.standard_normal((2, 5))
    R = unvec_skew([0.4], 2)
    M = (W @ (W + 0.2 * rng.standard_normal((2, 5))).T @ np.linalg.matrix_power(np.eye(2) + R, 1))[None]
    B = skew_basis(2)[0]
    assert np.trace(B @ B @ M[0]) < 0
    Gamma, report = solve_gauge_direct(M)
    expected = np.trace(B @ M[0]) / np.trace(B @ B @ M[0])
    assert vec_skew(Gamma[1])[0] == pytest.approx(expected, rel=1e-12)
    np.testing.assert_array_equal(Gamma[0], 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_direct_is_stationary(seed):
    Z, _ = perturbed_sequence(seed)
    M = precompute_couplings(Z)
    Gamma, report = solve_gauge_direct(M)
    _, _, rhs = assemble_gauge_system(M)
    assert np.linalg.norm(gauge_objective_grad(Gamma, M)) <= 1e-8
    assert report.residual <= 1e-8 * (1 + np.linalg.norm(rhs))
    assert report.objective_final <= report.objective_initial + 1e-12
    assert report.objective_final == pytest.approx(gauge_objective(Gamma, M), rel=1e-10)
    payload = json.loads(report.to_json())
    assert payload["solver"] == "direct"


def test_direct_detects_degenerate_couplings(rng):
    with pytest.raises(SingularSystem):
        solve_gauge_direct(np.zeros((3, 3, 3)))
    Z = rng.standard_normal((4, 3, 6))
    Z[2] = 0.0
    with pytest.raises(SingularSystem):
        solve_gauge_direct(precompute_couplings(Z))


def test_descent_handles_degenerate_couplings():
    Z, _ = perturbed_sequence(3, T=6)
    Z[2] = 0.0
    Gamma, report = solve_gauge_descent(precompute_couplings(Z))
    assert report.rank_deficient
    assert report.objective_final <= report.objective_initial + 1e-12


@pytest.mark.parametrize("precond", ["full", "block_jacobi"])
@pytest.mark.parametrize("seed", range(4))
def test_descent_agrees_with_direct(precond, seed):
    Z, _ = perturbed_sequence(seed, T=8)
    M = precompute_couplings(Z)
    direct, _ = solve_gauge_direct(M)
    descent, report = solve_gauge_descent(M, precond=precond, max_iter=5000, tol=1e-11)
    np.testing.assert_allclose(descent, direct, atol=1e-6)
    history = np.array(report.objective_history)
    assert np.all(np.diff(history) <= 1e-12 * np.maximum(1.0, np.abs(history[1:])))
    assert report.objective_final <= report.objective_initial + 1e-12


def test_descent_on_symmetric_couplings_stops_immediately(rng):
    W = rng.standard_normal((3, 3, 5))
    Gamma, report = solve_gauge_descent(np.matmul(W, W.transpose(0, 2, 1)))
    assert report.iterations <= 1
    np.testing.assert_allclose(Gamma, 0.0, atol=1e-14)


def test_descent_reports_nonconvergence():
    Z, _ = perturbed_sequence(0, T=16)
    with pytest.raises(NonConvergence) as info:
        solve_gauge_descent(precompute_couplings(Z), precond="block_jacobi", max_iter=2, tol=1e-14)
    assert info.value.report.iterations == 2
    assert info.value.field.shape == (16, 3, 3)


def test_so1_is_trivial(rng):
    M = rng.standard_normal((3, 1, 1))
    for solve in (solve_gauge_direct, solve_gauge_descent):
        Gamma, report = solve(M)
        assert Gamma.shape == (4, 1, 1)
        assert report.iterations == 0


def test_apply_gauge_identity_and_constant_field(rng):
    Z, _ = perturbed_sequence(1)
    np.testing.assert_array_equal(apply_gauge(Z, np.zeros((6, 3, 3))), Z)
    S = random_skew(3, rng)
    rotated = apply_gauge(Z, np.repeat(S[None], 6, axis=0))
    assert regularizer(rotated, 1.0) == pytest.approx(regularizer(Z, 1.0), rel=1e-9)
    with pytest.raises(ValueError):
        apply_gauge(Z, np.zeros((5, 3, 3)))


@pytest.mark.parametrize("seed", range(20))
def test_apply_gauge_preserves_local_losses(seed):
    Z, model = perturbed_sequence(seed, drift=0.2)
    Z = Z + 0.2 * np.random.default_rng(seed).standard_normal(Z.shape)
    problem = ChainProblem(model, 1.0)
    Gamma, _ = solve_gauge_direct(precompute_couplings(Z))
    before, reg_before = loss_terms(problem, Z)
    after, reg_after = loss_terms(problem, apply_gauge(Z, Gamma))
    assert abs(after - before) <= 1e-9 * abs(before)
    assert reg_after < reg_before


def test_truncated_apply_is_close_for_small_fields(rng):
    Z, _ = perturbed_sequence(2, amplitude=0.01, drift=0.0)
    Gamma, _ = solve_gauge_direct(precompute_couplings(Z))
    exact = apply_gauge(Z, Gamma)
    truncated = apply_gauge(Z, Gamma, mode="truncated", order=3)
    assert np.linalg.norm(exact - truncated) <= 1e-7 * np.linalg.norm(Z)


def _truncation_errors(Z, Gamma, lam, with_commutator=False):
    problem = ChainProblem(NullModel(Z.shape[0]), lam)
    M = precompute_couplings(Z)
    base = total_loss(problem, Z)
    errors = []
    eps_grid = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    for eps in eps_grid:
        G = eps * Gamma
        exact = total_loss(problem, apply_gauge(Z, G)) - base
        model = lam * gauge_objective(G, M)
        if with_commutator:
            comm = np.matmul(G[1:], G[:-1]) - np.matmul(G[:-1], G[1:])
            model += 0.5 * lam * np.einsum("lab,lba->", comm, M)
        errors.append(abs(exact - model))
    return eps_grid, np.array(errors)


def _slope(eps, err):
    return np.polyfit(np.log(eps), np.log(err), 1)[0]


@pytest.mark.parametrize("seed", range(4))
def test_quadratic_truncation_is_third_order_for_commuting_fields(seed):
    rng = np.random.default_rng(seed)
    lam = 1.5
    # so(2) is abelian
    Z = rng.standard_normal((5, 2, 6))
    eps, err = _truncation_errors(Z, random_field(5, 2, rng), lam)
    assert _slope(eps, err) >= 2.9
    # fields along a single generator commute in any dimension
    Z = rng.standard_normal((5, 4, 6))
    B = random_skew(4, rng)
    eps, err = _truncation_errors(Z, rng.standard_normal(5)[:, None, None] * B, lam)
    assert _slope(eps, err) >= 2.9


def test_commutator_term_accounts_for_the_second_order_gap():
    rng = np.random.default_rng(11)
    Z = rng.standard_normal((4, 3, 6))
    Gamma = random_field(4, 3, rng)
    eps, err = _truncation_errors(Z, Gamma, 1.0)
    assert 1.8 <= _slope(eps, err) <= 2.2
    eps, err = _truncation_errors(Z, Gamma, 1.0, with_commutator=True)
    assert _slope(eps, err) >= 2.9


@pytest.mark.parametrize("seed", range(3))
def test_direct_solve_matches_brute_force_small(seed):
    Z_star, model = generate_ground_truth_sequence(2, 4, 3, 0.05, seed=100 + seed)
    problem = ChainProblem(model, 1.0)
    Z = inject_goldstone_mode(Z_star, 0.08, 1)
    Gamma, _ = solve_gauge_direct(precompute_couplings(Z))
    direct = total_loss(problem, apply_gauge(Z, Gamma))
    brute, _ = brute_force_gauge(problem, Z)
    assert direct < total_loss(problem, Z)
    assert abs(direct - brute) <= 1e-4 * brute
