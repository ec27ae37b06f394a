"""Rotation-invariant local losses and synthetic data for them.

Every model here satisfies ``loss(X_t, R @ Z_t) == loss(X_t, Z_t)`` for any
rotation ``R``. Single-frame functions take a ``(d, n)`` embedding matrix;
the model classes hold data for a whole sequence and evaluate ``(T, d, n)``
stacks through :mod:`goldstone_gd.kernels`.
"""
import numpy as np

from . import kernels


def _check_frame(Z):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise ValueError(f"embedding matrix must be 2-d (d, n), got shape {Z.shape}")
    return Z


def gram_loss(G, Z):
    """``1/4 * ||Z^T Z - G||_F^2``."""
    Z = _check_frame(Z)
    G = np.asarray(G, dtype=float)
    if G.shape != (Z.shape[1], Z.shape[1]):
        raise ValueError(f"Gram target {G.shape} does not match {Z.shape[1]} columns")
    resid = Z.T @ Z - G
    return 0.25 * float(np.sum(resid * resid))


def gram_loss_grad(G, Z):
    Z = _check_frame(Z)
    G = np.asarray(G, dtype=float)
    if G.shape != (Z.shape[1], Z.shape[1]):
        raise ValueError(f"Gram target {G.shape} does not match {Z.shape[1]} columns")
    return Z @ (Z.T @ Z - G)


def _split(X, Z, n_u):
    Z = _check_frame(Z)
    X = np.asarray(X, dtype=float)
    n_v = Z.shape[1] - n_u
    if n_u < 1 or n_v < 1 or X.shape != (n_u, n_v):
        raise ValueError(f"split ({n_u}, {n_v}) inconsistent with Z {Z.shape} and X {X.shape}")
    return X, Z[:, :n_u], Z[:, n_u:]


def factorization_loss(X, Z, n_u):
    """``1/2 * ||X - U^T V||_F^2`` where ``U, V`` are the first ``n_u`` and
    remaining columns of ``Z``."""
    X, U, V = _split(X, Z, n_u)
    E = U.T @ V - X
    return 0.5 * float(np.sum(E * E))


def factorization_loss_grad(X, Z, n_u):
    X, U, V = _split(X, Z, n_u)
    E = U.T @ V - X
    return np.concatenate([V @ E.T, U @ E], axis=1)


class LocalLossModel:
    """Per-timestep data plus a rotation-invariant loss over a ``(T, d, n)`` stack."""

    kind = None

    @property
    def timesteps(self):
        raise NotImplementedError

    def value_and_grad(self, Z):
        """Return ``(losses, grads)`` with shapes ``(T,)`` and ``(T, d, n)``."""
        raise NotImplementedError

    def values(self, Z):
        return self.value_and_grad(Z)[0]

    def grads(self, Z):
        return self.value_and_grad(Z)[1]

    def frame_loss(self, t, Zt):
        raise NotImplementedError

    def check_shape(self, Z):
        Z = np.asarray(Z, dtype=float)
        if Z.ndim != 3 or Z.shape[0] != self.timesteps:
            raise ValueError(f"expected a ({self.timesteps}, d, n) stack, got {Z.shape}")
        return Z

    def to_dict(self):
        return {"kind": self.kind, "timesteps": self.timesteps}


class GramModel(LocalLossModel):
    kind = "gram"

    def __init__(self, targets):
        targets = np.ascontiguousarray(targets, dtype=float)
        if targets.ndim != 3 or targets.shape[1] != targets.shape[2]:
            raise ValueError(f"Gram targets must be (T, n, n), got {targets.shape}")
        if not np.allclose(targets, targets.transpose(0, 2, 1), atol=1e-12, rtol=0):
            raise ValueError("Gram targets must be symmetric")
        self.targets = targets

    @property
    def timesteps(self):
        return self.targets.shape[0]

    def value_and_grad(self, Z):
        Z = np.ascontiguousarray(self.check_shape(Z))
        if Z.shape[2] != self.targets.shape[1]:
            raise ValueError(f"{Z.shape[2]} columns do not match Gram size {self.targets.shape[1]}")
        return kernels.gram_value_grad(Z, self.targets)

    def frame_loss(self, t, Zt):
        return gram_loss(self.targets[t], Zt)


class FactorizationModel(LocalLossModel):
    kind = "factorization"

    def __init__(self, targets, n_u):
        targets = np.ascontiguousarray(targets, dtype=float)
        if targets.ndim != 3:
            raise ValueError(f"factorization targets must be (T, n_u, n_v), got {targets.shape}")
        if targets.shape[1] != n_u:
            raise ValueError(f"targets have {targets.shape[1]} rows but n_u = {n_u}")
        self.targets = targets
        self.n_u = int(n_u)

    @property
    def timesteps(self):
        return self.targets.shape[0]

    def value_and_grad(self, Z):
        Z = np.ascontiguousarray(self.check_shape(Z))
        if Z.shape[2] != self.n_u + self.targets.shape[2]:
            raise ValueError(
                f"{Z.shape[2]} columns do not split into ({self.n_u}, {self.targets.shape[2]})"
            )
        return kernels.factorization_value_grad(Z, self.targets, self.n_u)

    def frame_loss(self, t, Zt):
        return factorization_loss(self.targets[t], Zt, self.n_u)

    def to_dict(self):
        return {**super().to_dict(), "n_u": self.n_u}


class NullModel(LocalLossModel):
    """``l == 0``: leaves only the spring chain, useful for exact GD dynamics."""

    kind = "null"

    def __init__(self, timesteps):
        self._T = int(timesteps)

    @property
    def timesteps(self):
        return self._T

    def value_and_grad(self, Z):
        Z = self.check_shape(Z)
        return np.zeros(self._T), np.zeros_like(Z)

    def frame_loss(self, t, Zt):
        return 0.0


def generate_ground_truth_sequence(d, n, T, drift, seed, model="gram", n_u=None):
    """Random-walk embeddings ``Z*_t = Z*_{t-1} + drift * noise`` and matching data.

    Returns ``(Z_star, model)`` where ``Z_star`` has shape ``(T, d, n)`` and the
    model's data are fitted exactly by ``Z_star`` (zero local loss per frame).
    ``n_u`` sets the U/V column split for the factorization model (default
    ``n // 2``).
    """
    if d < 1 or n < d or T < 2 or drift < 0:
        raise ValueError(f"invalid sizes d={d}, n={n}, T={T}, drift={drift}")
    rng = np.random.default_rng(seed)
    start = rng.standard_normal((d, n))
    steps = rng.standard_normal((T - 1, d, n))
    Z_star = np.concatenate([start[None], start[None] + drift * np.cumsum(steps, axis=0)])
    if drift == 0:
        Z_star = np.repeat(start[None], T, axis=0)
    if model == "gram":
        targets = np.matmul(Z_star.transpose(0, 2, 1), Z_star)
        targets = 0.5 * (targets + targets.transpose(0, 2, 1))
        return Z_star, GramModel(targets)
    if model == "factorization":
        n_u = n // 2 if n_u is None else int(n_u)
        U = Z_star[:, :, :n_u]
        V = Z_star[:, :, n_u:]
        return Z_star, FactorizationModel(np.matmul(U.transpose(0, 2, 1), V), n_u)
    raise ValueError(f"unknown model kind {model!r}")
