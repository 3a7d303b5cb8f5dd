"""Closed-form concentration bounds used by the estimator and the simulators.

All functions are pure scalar maps. The iterated-logarithm term

    ell_delta(n) = 2 log log(2n) + log(d pi^2 / (12 delta))

is floored at zero, so every bound below is nonnegative. Confidence
parameters enter logarithms directly and are never exponentiated, which keeps
the covering-number adjustment 17**d finite for large d.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import DegenerateGapError, InvalidInputError

SUBGAUSSIAN = "subgaussian"
BOUNDED = "bounded"
NOISE_REGIMES = (SUBGAUSSIAN, BOUNDED)

_LOG17 = math.log(17.0)


@dataclass(frozen=True)
class BoundConfig:
    """Scalar problem constants shared by every bound.

    Parameters
    ----------
    delta : float
        Confidence parameter in (0, 1).
    rho : float
        Ridge parameter, strictly positive.
    sigma, eta : float
        SubGaussian scales of the covariate noise and outcome noise.
    gamma : float, optional
        Cap on the operator norm of the covariate-noise covariance.
        Defaults to ``sigma**2`` (isotropic Gaussian noise).
    alpha : float, optional
        Cap on the outcome-noise second moment. Defaults to ``eta**2``.
    slope_bound_L : float
        Upper bound on the norm of every slope vector.
    bounded_C : float
        Boundedness constant for the ``"bounded"`` regime.
    r, d : int
        Subspace and ambient dimension.
    num_actions_A : int
        Number of actions.
    noise_regime : {"subgaussian", "bounded"}
    """

    delta: float = 0.05
    rho: float = 0.01
    sigma: float = 0.1
    eta: float = 0.1
    gamma: float | None = None
    alpha: float | None = None
    slope_bound_L: float = 1.0
    bounded_C: float = 1.0
    r: int = 1
    d: int = 1
    num_actions_A: int = 1
    noise_regime: str = SUBGAUSSIAN

    def __post_init__(self):
        if self.gamma is None:
            object.__setattr__(self, "gamma", float(self.sigma) ** 2)
        if self.alpha is None:
            object.__setattr__(self, "alpha", float(self.eta) ** 2)
        self.validate()

    def validate(self):
        if not (0.0 < self.delta < 1.0):
            raise InvalidInputError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.rho > 0:
            raise InvalidInputError(f"rho must be positive, got {self.rho}")
        for name in ("sigma", "eta", "gamma", "alpha", "slope_bound_L", "bounded_C"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidInputError(f"{name} must be finite and nonnegative, got {v}")
        if int(self.r) != self.r or self.r < 1:
            raise InvalidInputError(f"r must be a positive integer, got {self.r}")
        if int(self.d) != self.d or self.d < self.r:
            raise InvalidInputError(f"d must be an integer >= r, got d={self.d}, r={self.r}")
        if int(self.num_actions_A) != self.num_actions_A or self.num_actions_A < 1:
            raise InvalidInputError(f"num_actions_A must be >= 1, got {self.num_actions_A}")
        if self.noise_regime not in NOISE_REGIMES:
            raise InvalidInputError(f"unknown noise regime {self.noise_regime!r}")

    @property
    def L(self) -> float:
        return float(self.slope_bound_L)

    @property
    def A(self) -> int:
        return int(self.num_actions_A)

    def with_(self, **kw) -> "BoundConfig":
        return replace(self, **kw)


def _check_delta(delta):
    if not (0.0 < delta < 1.0):
        raise InvalidInputError(f"delta must lie in (0, 1), got {delta}")


def _check_n(n):
    if n < 1:
        raise InvalidInputError(f"round count must be >= 1, got {n}")


def _ell_from_log(n: float, log_ratio: float) -> float:
    # log_ratio = log(d pi^2 / (12 delta)), possibly with extra additive terms
    return max(0.0, 2.0 * math.log(math.log(2.0 * n)) + log_ratio)


def ell_delta(n, d, delta) -> float:
    """Iterated-logarithm boundary term, floored at zero.

    Examples
    --------
    >>> round(ell_delta(2, 2, 0.05), 3)
    4.147
    """
    _check_delta(delta)
    _check_n(n)
    return _ell_from_log(n, math.log(d * math.pi**2 / (12.0 * delta)))


def ell_delta_covering(n, d, delta) -> float:
    """ell evaluated at delta / (2 * 17**d), computed in log space."""
    _check_delta(delta)
    _check_n(n)
    log_ratio = math.log(d * math.pi**2 / (12.0 * delta)) + math.log(2.0) + d * _LOG17
    return _ell_from_log(n, log_ratio)


def stitched_subgamma_bound(n, sigma_g, c, d, delta) -> float:
    """Time-uniform bound on a sum of n independent (sigma_g, c)-subGamma terms."""
    ell = ell_delta(n, d, delta)
    return 1.5 * sigma_g * math.sqrt(n * ell) + 2.5 * c * ell


def noise_opnorm_bound_U(n, cfg: BoundConfig) -> float:
    """Envelope U_n on the operator norm of the n x d covariate-noise matrix."""
    _check_n(n)
    d = cfg.d
    if cfg.noise_regime == SUBGAUSSIAN:
        beta = 32.0 * cfg.sigma**2 * math.e**2
        ell = ell_delta_covering(n, d, cfg.delta)
        u_sq = beta * (3.0 * math.sqrt(n * ell) + 5.0 * ell) + n * cfg.gamma
    elif cfg.noise_regime == BOUNDED:
        ell = ell_delta(n, d, cfg.delta)
        Cd = cfg.bounded_C * d
        u_sq = 1.5 * math.sqrt(n * Cd * cfg.gamma * ell) + (7.0 / 3.0) * Cd * ell + n * cfg.gamma
    else:
        raise InvalidInputError(f"unknown noise regime {cfg.noise_regime!r}")
    return math.sqrt(u_sq)


def det_trace_log_bound(rank_r, sigma1, rho) -> float:
    """r log(1 + sigma1**2 / rho), the cap on log det(I + Z^T Z / rho)."""
    if not rho > 0:
        raise InvalidInputError(f"rho must be positive, got {rho}")
    if rank_r < 1 or sigma1 < 0:
        raise InvalidInputError("rank_r must be >= 1 and sigma1 >= 0")
    return rank_r * math.log1p(sigma1**2 / rho)


def ellipsoid_radius_sq(cfg: BoundConfig, sigma1_Z_a, U_n) -> float:
    """Squared radius of the confidence ellipsoid in the true subspace."""
    if sigma1_Z_a < 0 or U_n < 0:
        raise InvalidInputError("sigma1 and U_n must be nonnegative")
    L = cfg.L
    log_term = math.log(cfg.A / cfg.delta) + det_trace_log_bound(cfg.r, sigma1_Z_a, cfg.rho)
    return 4.0 * cfg.rho * L**2 + 8.0 * cfg.eta**2 * log_term + 2.0 * L**2 * U_n**2


def response_sq_norm_bound(n_a, cfg: BoundConfig) -> float:
    """High-probability cap on the squared norm of n_a outcome-noise draws."""
    _check_n(n_a)
    ell = ell_delta(n_a, cfg.d, cfg.delta)
    eta2 = cfg.eta**2
    return 6.0 * eta2 * math.sqrt(2.0 * n_a * ell) + 10.0 * eta2 * ell + n_a * cfg.alpha


def projection_convergence_bound(sv_gap, U_n) -> float:
    """min(1, 2 U_n / gap): distance between learned and true projectors."""
    if not sv_gap > 0:
        raise DegenerateGapError(f"singular-value gap must be positive, got {sv_gap}")
    return min(1.0, 2.0 * U_n / sv_gap)


def err_term(cfg: BoundConfig, n_a, sigma1_Z_a) -> float:
    """The aggregate error term err_n(a) of the empirical guarantee."""
    _check_n(n_a)
    eta2 = cfg.eta**2
    ell = ell_delta(n_a, cfg.d, cfg.delta)
    log_term = math.log(cfg.A / cfg.delta) + det_trace_log_bound(cfg.r, sigma1_Z_a, cfg.rho)
    return (
        32.0 * cfg.rho * cfg.L**2
        + 64.0 * eta2 * log_term
        + 6.0 * eta2 * math.sqrt(2.0 * n_a * ell)
        + 10.0 * eta2 * ell
        + 6.0 * n_a * cfg.alpha
    )


def empirical_bound_formula(L, snr_hat, kappa, sigma_r, err) -> float:
    """(L^2 / snr^2)(74 + 216 kappa^2) + 2 err / sigma_r^2."""
    if not (snr_hat > 0 and sigma_r > 0):
        raise InvalidInputError("snr and sigma_r must be positive")
    return (L**2 / snr_hat**2) * (74.0 + 216.0 * kappa**2) + 2.0 * err / sigma_r**2
