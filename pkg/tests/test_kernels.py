"""The numpy and numba kernel tables must agree."""
import numpy as np
import pytest

from goldstone_gd import kernels
from goldstone_gd._backend import HAVE_NUMBA

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")

NP, NB = kernels.NUMPY_KERNELS, kernels.NUMBA_KERNELS


def spd_blocks(rng, S, K):
    W = rng.standard_normal((S, K, K + 2))
    diag = np.matmul(W, W.transpose(0, 2, 1)) + 3.0 * np.eye(K)
    off = 0.3 * rng.standard_normal((S - 1, K, K))
    return diag, off


def test_gram(rng):
    Z = rng.standard_normal((5, 3, 7))
    W = rng.standard_normal((5, 3, 7))
    G = np.matmul(W.transpose(0, 2, 1), W)
    for a, b in zip(NP["gram_value_grad"](Z, G), NB["gram_value_grad"](Z, G)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_factorization(rng):
    Z = rng.standard_normal((4, 3, 7))
    X = rng.standard_normal((4, 3, 4))
    for a, b in zip(NP["factorization_value_grad"](Z, X, 3), NB["factorization_value_grad"](Z, X, 3)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_spring(rng):
    Z = rng.standard_normal((6, 3, 4))
    g1, g2 = np.zeros_like(Z), np.zeros_like(Z)
    r1 = NP["spring_value_grad"](Z, 0.7, g1)
    r2 = NB["spring_value_grad"](Z, 0.7, g2)
    assert r1 == pytest.approx(r2, rel=1e-13)
    np.testing.assert_allclose(g1, g2, rtol=1e-13)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_gauge_blocks(rng, d):
    M = rng.standard_normal((4, d, d))
    for a, b in zip(NP["gauge_blocks"](M), NB["gauge_blocks"](M)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_block_tridiag_solve_and_matvec(rng):
    S, K = 7, 4
    diag, off = spd_blocks(rng, S, K)
    rhs = rng.standard_normal((S, K))
    dense = np.zeros((S * K, S * K))
    for s in range(S):
        dense[s * K:(s + 1) * K, s * K:(s + 1) * K] = diag[s]
        if s < S - 1:
            dense[s * K:(s + 1) * K, (s + 1) * K:(s + 2) * K] = off[s]
            dense[(s + 1) * K:(s + 2) * K, s * K:(s + 1) * K] = off[s].T
    expected = np.linalg.solve(dense, rhs.ravel()).reshape(S, K)
    for table in (NP, NB):
        x, pivot, ok = table["block_tridiag_solve"](diag, off, rhs, 0.0)
        assert ok and pivot > 0
        np.testing.assert_allclose(x, expected, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(table["block_tridiag_matvec"](diag, off, x), rhs, atol=1e-10)


def test_block_tridiag_flags_indefinite(rng):
    diag, off = spd_blocks(rng, 4, 3)
    diag[2] = -np.eye(3)
    for table in (NP, NB):
        _, pivot, ok = table["block_tridiag_solve"](diag, off, np.ones((4, 3)), 0.0)
        assert not ok and pivot < 0
