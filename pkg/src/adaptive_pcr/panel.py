"""Synthetic interventions on panel data via horizontal adaptive PCR.

Units arrive one at a time. Each is observed under control for ``T0`` periods
and then under one intervention ``a`` in ``0 .. A-1`` for ``T - T0`` periods.
Outcomes follow a latent factor model

    Y[n, t] = <U_t^(a), V_n> + noise.

The average expected post-intervention outcome of a unit is a linear function
of its expected pre-period outcomes, with a slope theta(a) shared by all
units. That slope is learned by regressing each prior unit's summed post
outcomes on its pre-period outcome vector.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from . import concentration as conc
from .concentration import BoundConfig
from .errors import (
    AssumptionViolatedError,
    ConfigError,
    InvalidInputError,
    MalformedInputError,
    NoDataError,
    SchemaError,
)
from .linalg import numerical_rank
from .pcr import PcrState

ASSIGNMENTS = ("uniform", "greedy")
SPAN_TOL = 1e-8


@dataclass(frozen=True)
class PanelFactors:
    """Ground-truth latent factors.

    ``U_pre`` is T0 x r (control), ``U_post`` is A x (T - T0) x r, ``V`` is n x r
    and ``noise`` is n x T (the draws actually added to observed outcomes).
    """

    U_pre: np.ndarray
    U_post: np.ndarray
    V: np.ndarray
    noise: np.ndarray
    sigma: float


@dataclass(frozen=True)
class PanelDataset:
    T: int
    T0: int
    A: int
    r: int
    outcomes: np.ndarray
    interventions: np.ndarray
    unit_ids: tuple
    factors: PanelFactors | None = None

    def __post_init__(self):
        if not (0 < self.T0 < self.T):
            raise SchemaError(f"need 0 < T0 < T, got T0={self.T0}, T={self.T}")
        if self.outcomes.shape != (len(self.unit_ids), self.T):
            raise SchemaError(f"outcomes have shape {self.outcomes.shape}, expected ({len(self.unit_ids)}, {self.T})")
        if self.interventions.shape != (len(self.unit_ids),):
            raise SchemaError("one realized intervention per unit is required")
        if np.any((self.interventions < 0) | (self.interventions >= self.A)):
            raise SchemaError(f"interventions must lie in 0..{self.A - 1}")

    @property
    def n_units(self) -> int:
        return len(self.unit_ids)

    @property
    def pre(self) -> np.ndarray:
        return self.outcomes[:, : self.T0]

    @property
    def post(self) -> np.ndarray:
        return self.outcomes[:, self.T0 :]

    def expected_pre(self) -> np.ndarray:
        f = self._require_factors()
        return f.V @ f.U_pre.T

    def expected_post_mean(self, a: int) -> np.ndarray:
        """Average expected post-period outcome of every unit under ``a``."""
        f = self._require_factors()
        return f.V @ f.U_post[a].mean(axis=0)

    def _require_factors(self) -> PanelFactors:
        if self.factors is None:
            raise NoDataError("dataset carries no ground-truth factors")
        return self.factors


# -- ground truth -------------------------------------------------------------
def theta_from_factors(ds: PanelDataset, a: int) -> np.ndarray:
    """Minimum-norm slope theta(a) with sum_post U^(a) = sum_pre theta_t U^(0)_t."""
    f = ds._require_factors()
    target = f.U_post[a].sum(axis=0)
    theta, *_ = np.linalg.lstsq(f.U_pre.T, target, rcond=None)
    resid = np.linalg.norm(f.U_pre.T @ theta - target)
    if resid > SPAN_TOL * max(1.0, np.linalg.norm(target)):
        raise AssumptionViolatedError(
            f"post factors of intervention {a} leave the pre-period span (residual {resid:.3g})"
        )
    return theta


def reformulation_gap(ds: PanelDataset, a: int) -> float:
    """max_n |E Ybar_post^(a) - <theta(a), E Y_pre> / (T - T0)| over units."""
    theta = theta_from_factors(ds, a)
    lhs = ds.expected_post_mean(a)
    rhs = ds.expected_pre() @ theta / (ds.T - ds.T0)
    return float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0


# -- generation ---------------------------------------------------------------
def _regression_config(ds_or_dims, sigma, cfg: BoundConfig | None):
    T, T0, A, r = ds_or_dims
    h = T - T0
    base = cfg if cfg is not None else BoundConfig()
    return replace(
        base, d=T0, r=r, num_actions_A=A, sigma=sigma, gamma=sigma**2,
        eta=sigma * math.sqrt(h), alpha=sigma**2 * h,
    )


def gen_panel(n_units, T, T0, A, r, sigma=0.1, L=10.0, *, assignment="uniform", seed=None,
              rho=0.01) -> PanelDataset:
    """Sample a panel from a latent factor model that satisfies span inclusion.

    Parameters
    ----------
    assignment : {"uniform", "greedy"}
        Uniform random interventions, or greedy on the current estimates after
        a round-robin burn-in of ``r`` units per intervention.
    L : float
        Post factors are shrunk so that every ||theta(a)|| <= L.
    """
    if not (0 < T0 < T):
        raise ConfigError(f"need 0 < T0 < T, got T0={T0}, T={T}")
    if r > T0 or r < 1:
        raise ConfigError(f"need 1 <= r <= T0, got r={r}, T0={T0}")
    if assignment not in ASSIGNMENTS:
        raise ConfigError(f"assignment must be one of {ASSIGNMENTS}")
    if A < 1 or n_units < 1:
        raise ConfigError("need A >= 1 and n_units >= 1")
    rng = np.random.default_rng(seed)
    h = T - T0
    U_pre = rng.standard_normal((T0, r))
    while numerical_rank(U_pre) < r:
        U_pre = rng.standard_normal((T0, r))
    U_post = rng.standard_normal((A, h, r))
    V = rng.standard_normal((n_units, r))
    # |<U, V>| <= 1 across every period, intervention and unit
    scale = max(np.abs(V @ U_pre.T).max(), np.abs(np.einsum("nr,ahr->nah", V, U_post)).max())
    U_pre, U_post = U_pre / scale, U_post / scale
    pinv = np.linalg.pinv(U_pre.T)
    for a in range(A):
        nrm = np.linalg.norm(pinv @ U_post[a].sum(axis=0))
        if nrm > L:
            U_post[a] *= L / nrm
    noise = sigma * rng.standard_normal((n_units, T))
    pre = V @ U_pre.T + noise[:, :T0]
    acts = np.empty(n_units, dtype=int)
    if assignment == "uniform":
        acts[:] = rng.integers(A, size=n_units)
    else:
        cfg = _regression_config((T, T0, A, r), sigma, BoundConfig(rho=rho, slope_bound_L=L))
        state = PcrState(cfg)
        burn = A * r
        for n in range(n_units):
            if n < burn:
                a = n % A
            else:
                vals = [float(state.estimate(b) @ pre[n]) for b in range(A)]
                a = int(np.argmax(vals))
            acts[n] = a
            y_post = V[n] @ U_post[a].T + noise[n, T0:]
            state.observe(pre[n], a, float(y_post.sum()))
    post = np.einsum("nr,nhr->nh", V, U_post[acts]) + noise[:, T0:]
    outcomes = np.hstack([pre, post])
    return PanelDataset(T, T0, A, r, outcomes, acts, tuple(range(n_units)),
                        PanelFactors(U_pre, U_post, V, noise, float(sigma)))


# -- estimation ---------------------------------------------------------------
@dataclass(frozen=True)
class SiEstimate:
    unit: object
    intervention: int
    estimate: float
    bound: float | None
    truth: float | None
    snr_hat: float
    snr_gate: bool
    n_prior: int

    @property
    def abs_error(self) -> float | None:
        return None if self.truth is None else abs(self.estimate - self.truth)


def prediction_error_bound(snr_hat, kappa, sigma_r, err, T, T0, L, sigma, A, delta) -> float:
    """Eight-term bound on |estimated - true| average post-intervention outcome."""
    if not (snr_hat > 0 and sigma_r > 0):
        raise InvalidInputError("snr and sigma_r must be positive")
    if not (0 < T0 < T) or err < 0 or L < 0 or sigma < 0:
        raise InvalidInputError("invalid bound inputs")
    h = T - T0
    lg = math.log(A / delta)
    sh = math.sqrt(h)
    terms = (
        3.0 * math.sqrt(T0) / snr_hat
        * (L * (math.sqrt(74.0) + 12.0 * math.sqrt(6.0) * kappa) / (h * snr_hat)
           + math.sqrt(2.0 * err) / (sh * sigma_r)),
        2.0 * L * math.sqrt(24.0 * T0) / (h * snr_hat),
        12.0 * L * kappa * math.sqrt(3.0 * T0) / (h * snr_hat),
        2.0 * math.sqrt(err) / (sh * sigma_r),
        L * sigma * math.sqrt(lg) / sh,
        L * sigma * math.sqrt(74.0 * lg) / (snr_hat * sh),
        12.0 * sigma * kappa * math.sqrt(6.0 * lg) / (snr_hat * sh),
        sigma * math.sqrt(2.0 * err * lg) / sigma_r,
    )
    return float(sum(terms))


def simplified_rate(T, T0, n, r, L) -> float:
    """Order-of-magnitude form L/sqrt(T-T0) + r/sqrt(T0^n) + r(L v 1)/sqrt((T-T0)(T0^n)).

    Constants and log factors are dropped, so this is a diagnostic only.
    """
    m = min(T0, n)
    h = T - T0
    return L / math.sqrt(h) + r / math.sqrt(m) + r * max(L, 1.0) / math.sqrt(h * m)


def panel_err(cfg: BoundConfig, T, T0, count, sigma1) -> float:
    """Error term of the panel guarantee; cfg must use the panel mapping of eta and alpha."""
    return conc.err_term(cfg, count, sigma1) / (T - T0)


def build_state(ds: PanelDataset, upto: int, cfg: BoundConfig) -> PcrState:
    """PCR state fed with units ``0 .. upto-1``."""
    state = PcrState(cfg)
    post_sum = ds.post.sum(axis=1)
    for n in range(upto):
        state.observe(ds.pre[n], int(ds.interventions[n]), float(post_sum[n]))
    return state


def panel_config(ds: PanelDataset, sigma: float, cfg: BoundConfig | None = None) -> BoundConfig:
    return _regression_config((ds.T, ds.T0, ds.A, ds.r), sigma, cfg)


def estimate_from_state(ds: PanelDataset, state: PcrState, unit: int, a: int, sigma: float) -> SiEstimate:
    if state.count(a) == 0:
        raise NoDataError(f"no prior unit received intervention {a}")
    h = ds.T - ds.T0
    cfg = state.cfg
    est = float(state.estimate(a) @ ds.pre[unit]) / h
    sm = state.summary(a)
    bound = None
    if sm.rank_ok:
        err = panel_err(cfg, ds.T, ds.T0, sm.count, sm.sigma_1)
        bound = prediction_error_bound(sm.snr_hat, sm.kappa, sm.sigma_r, err, ds.T, ds.T0,
                                       cfg.L, sigma, cfg.A, cfg.delta)
    truth = float(ds.expected_post_mean(a)[unit]) if ds.factors is not None else None
    return SiEstimate(ds.unit_ids[unit], a, est, bound, truth, sm.snr_hat, sm.gate_ok, state.n)


def fit_and_estimate(ds: PanelDataset, unit: int, a: int, cfg: BoundConfig | None = None,
                     sigma: float | None = None) -> SiEstimate:
    """Estimate unit ``unit``'s average post outcome under ``a`` from units before it.

    ``sigma`` defaults to the factor noise scale when ground truth is present,
    else to ``cfg.sigma``. The bound is reported whenever rank(Z(a)) = r;
    ``snr_gate`` records whether the empirical snr also reached 2.
    """
    if not (0 <= unit < ds.n_units):
        raise InvalidInputError(f"unit index {unit} out of range")
    if not (0 <= a < ds.A):
        raise InvalidInputError(f"intervention {a} outside 0..{ds.A - 1}")
    if sigma is None:
        sigma = ds.factors.sigma if ds.factors is not None else (cfg.sigma if cfg else 0.1)
    pcfg = panel_config(ds, sigma, cfg)
    state = build_state(ds, unit, pcfg)
    return estimate_from_state(ds, state, unit, a, sigma)


# -- file format --------------------------------------------------------------
HEADER = ("unit_id", "time", "intervention", "outcome")


def meta_path(path) -> str:
    return os.fspath(path) + ".meta"


def export_panel(ds: PanelDataset, path) -> None:
    """Write the long-format CSV and its ``.meta`` sidecar."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for i, uid in enumerate(ds.unit_ids):
            for t in range(ds.T):
                a = 0 if t < ds.T0 else int(ds.interventions[i])
                w.writerow([uid, t + 1, a, repr(float(ds.outcomes[i, t]))])
    with open(meta_path(path), "w") as fh:
        fh.write(f"T={ds.T}\nT0={ds.T0}\nA={ds.A}\nr={ds.r}\n")


def _read_meta(path) -> dict:
    mp = meta_path(path)
    if not os.path.exists(mp):
        raise SchemaError(f"missing metadata sidecar {mp}")
    meta = {}
    with open(mp) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            k, sep, v = line.partition("=")
            if not sep or k.strip() not in ("T", "T0", "A", "r"):
                raise SchemaError(f"bad metadata line {line!r}")
            try:
                meta[k.strip()] = int(v)
            except ValueError as exc:
                raise SchemaError(f"non-integer metadata value {line!r}") from exc
    missing = {"T", "T0", "A", "r"} - meta.keys()
    if missing:
        raise SchemaError(f"metadata lacks {sorted(missing)}")
    return meta


def ingest_panel(path) -> PanelDataset:
    """Read a long-format panel file and validate it against its sidecar."""
    meta = _read_meta(path)
    T, T0, A, r = meta["T"], meta["T0"], meta["A"], meta["r"]
    if not (0 < T0 < T):
        raise SchemaError(f"inconsistent T0={T0}, T={T}")
    cells: dict = {}
    order: list = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != HEADER:
            raise SchemaError(f"expected header {','.join(HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4 or any(c.strip() == "" for c in row):
                raise MalformedInputError(f"line {lineno}: expected 4 non-empty cells")
            uid = row[0].strip()
            try:
                t, a, y = int(row[1]), int(row[2]), float(row[3])
            except ValueError as exc:
                raise MalformedInputError(f"line {lineno}: unparsable cell") from exc
            if not (1 <= t <= T):
                raise SchemaError(f"line {lineno}: time {t} outside 1..{T}")
            if t <= T0 and a != 0:
                raise SchemaError(f"line {lineno}: pre-period row under intervention {a}")
            if not (0 <= a < A):
                raise SchemaError(f"line {lineno}: intervention {a} outside 0..{A - 1}")
            if uid not in cells:
                cells[uid] = {}
                order.append(uid)
            if t in cells[uid]:
                raise MalformedInputError(f"line {lineno}: duplicate (unit {uid}, time {t})")
            cells[uid][t] = (a, y)
    if not order:
        raise MalformedInputError("file has no data rows")
    Y = np.empty((len(order), T))
    acts = np.zeros(len(order), dtype=int)
    for i, uid in enumerate(order):
        row = cells[uid]
        gaps = [t for t in range(1, T + 1) if t not in row]
        if gaps:
            raise MalformedInputError(f"unit {uid} is missing times {gaps}")
        post_acts = {row[t][0] for t in range(T0 + 1, T + 1)}
        if len(post_acts) != 1:
            raise SchemaError(f"unit {uid} switches intervention in the post period")
        acts[i] = post_acts.pop()
        Y[i] = [row[t][1] for t in range(1, T + 1)]
    ids = tuple(int(u) if u.lstrip("-").isdigit() else u for u in order)
    return PanelDataset(T, T0, A, r, Y, acts, ids)
