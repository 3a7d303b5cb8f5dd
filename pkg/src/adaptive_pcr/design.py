"""Synthetic regression designs with a well-balanced low-rank covariate spectrum.

True covariates live in a random r-dimensional subspace of R^d,

    X_n = B g_n,    g_n ~ N(0, scale^2 (d / r) I_r),

so that every nonzero singular value of X_n(a) grows like
``scale * sqrt(c_n(a) d / r)``. Observed covariates add isotropic Gaussian
noise and outcomes follow the linear model with slope theta(a) in span(B).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .pcr import PcrState

ASSIGNMENT_POLICIES = ("random", "round_robin", "greedy")


def random_subspace(rng, d: int, r: int) -> np.ndarray:
    """Uniformly random d x r orthonormal basis (QR of a Gaussian matrix)."""
    Q, R = np.linalg.qr(rng.standard_normal((d, r)))
    # fix the QR sign ambiguity so the basis is Haar distributed
    return Q * np.sign(np.diag(R))


def slopes_on_sphere(rng, basis: np.ndarray, A: int, L: float) -> np.ndarray:
    """A slopes of norm exactly L inside span(basis); returned as an A x d array."""
    u = rng.standard_normal((A, basis.shape[1]))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return L * u @ basis.T


@dataclass(frozen=True)
class RegressionProblem:
    basis: np.ndarray
    thetas: np.ndarray
    scale: float
    sigma: float
    eta: float

    @property
    def d(self) -> int:
        return self.basis.shape[0]

    @property
    def r(self) -> int:
        return self.basis.shape[1]

    @property
    def A(self) -> int:
        return self.thetas.shape[0]


def gen_regression_problem(d, r, A, *, scale=1.0, sigma=0.1, eta=0.1, L=1.0, rng=None):
    if r > d or r < 1:
        raise ConfigError(f"need 1 <= r <= d, got r={r}, d={d}")
    if A < 1:
        raise ConfigError("need at least one action")
    rng = np.random.default_rng(rng)
    B = random_subspace(rng, d, r)
    return RegressionProblem(B, slopes_on_sphere(rng, B, A, L), float(scale), float(sigma), float(eta))


def draw_covariates(rng, prob: RegressionProblem, n: int):
    """Return (X, E): n true covariate rows and n noise rows."""
    g = rng.standard_normal((n, prob.r)) * (prob.scale * np.sqrt(prob.d / prob.r))
    X = g @ prob.basis.T
    E = prob.sigma * rng.standard_normal((n, prob.d))
    return X, E


def choose_action(policy: str, t: int, z, state: PcrState, rng) -> int:
    A = state.A
    if policy == "round_robin":
        return t % A
    if policy == "random":
        return int(rng.integers(A))
    if policy == "greedy":
        # unexplored actions first, then the best current fit on z
        counts = state.counts
        if counts.min() < state.r:
            return int(np.argmin(counts))
        scores = [float(state.estimate(a) @ z) for a in range(A)]
        return int(np.argmax(scores))
    raise ConfigError(f"unknown assignment policy {policy!r}")


def simulate(prob: RegressionProblem, state: PcrState, n: int, policy: str, rng, on_step=None):
    """Feed ``n`` rounds into ``state``; ``on_step(t, state)`` runs after each round.

    Returns the true covariates X (n x d) and the noise rows E.
    """
    if policy not in ASSIGNMENT_POLICIES:
        raise ConfigError(f"unknown assignment policy {policy!r}")
    X, E = draw_covariates(rng, prob, n)
    Z = X + E
    xi = prob.eta * rng.standard_normal(n)
    for t in range(n):
        a = choose_action(policy, t, Z[t], state, rng)
        state.observe(Z[t], a, float(prob.thetas[a] @ X[t] + xi[t]))
        if on_step is not None:
            on_step(t + 1, state)
    return X, E
