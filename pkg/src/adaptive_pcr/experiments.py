"""Seeded Monte Carlo harnesses behind the command line runner.

Replication ``i`` of a run with master seed ``s`` draws all of its randomness
from ``numpy.random.SeedSequence([s, i])``. Results therefore do not depend on
how replications are spread over worker processes.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources

import numpy as np

from . import concentration as conc
from . import panel as pnl
from .bandit import gen_environment, regret_bound_trace, run_episode
from .concentration import BoundConfig
from .design import gen_regression_problem, simulate
from .errors import AdaptivePcrError, ConfigError
from .pcr import PcrState

KINDS = ("coverage", "rate", "bandit", "panel", "selftest")

BOUND_FIELDS = tuple(f.name for f in fields(BoundConfig))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a run. Field names double as config-file keys."""

    kind: str = "coverage"
    reps: int = 200
    seed: int = 0
    out: str = "results"
    workers: int = 1
    # bound constants
    delta: float = 0.05
    rho: float = 0.01
    sigma: float = 0.1
    eta: float = 0.1
    gamma: float | None = None
    alpha: float | None = None
    slope_bound_L: float = 1.0
    bounded_C: float = 1.0
    r: int = 3
    d: int = 20
    num_actions_A: int = 3
    noise_regime: str = "subgaussian"
    # regression designs
    grid: tuple = (50, 100, 250, 500)
    scale: float = 20.0
    policy: str = "random"
    projector_scope: str = "per_action"
    # bandit
    mode: str = "ucb_ellipsoid"
    c_x: float = 10.0
    # panel
    T: int = 40
    T0: int = 20
    assignment: str = "uniform"

    def bound_config(self) -> BoundConfig:
        return BoundConfig(**{k: getattr(self, k) for k in BOUND_FIELDS})

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        g = list(self.grid)
        if not g or any(x < 1 for x in g) or any(b <= a for a, b in zip(g, g[1:])):
            raise ConfigError(f"grid must be a strictly increasing list of positive integers, got {g}")
        try:
            self.bound_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self


KIND_DEFAULTS = {
    "coverage": {},
    "rate": dict(d=2000, r=3, num_actions_A=2, sigma=1.0, eta=1.0, grid=(100, 400, 1600),
                 reps=50, scale=1.0, policy="round_robin"),
    "bandit": dict(d=10, r=2, num_actions_A=3, grid=(200, 2000), reps=20),
    "panel": dict(r=2, num_actions_A=3, slope_bound_L=10.0, grid=(200,), reps=200),
    "selftest": dict(reps=1),
}


def default_config(kind: str, **overrides) -> ExperimentConfig:
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    base = dict(KIND_DEFAULTS[kind])
    base.update(overrides)
    return ExperimentConfig(kind=kind, **base).validate()


def _convert(name: str, raw: str):
    tp = {f.name: f.type for f in fields(ExperimentConfig)}[name]
    raw = raw.strip()
    try:
        if name == "grid":
            return tuple(int(x) for x in raw.replace(";", ",").split(",") if x.strip())
        if name in ("gamma", "alpha"):
            return None if raw.lower() in ("", "none") else float(raw)
        if "int" in str(tp):
            return int(raw)
        if "float" in str(tp):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def parse_config_text(text: str) -> dict:
    """Parse a flat ``key = value`` document; ``#`` starts a comment."""
    known = {f.name for f in fields(ExperimentConfig)}
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = _convert(key, val)
    return out


def rep_rng(seed: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(i)]))


def rep_seeds(seed: int, i: int, k: int) -> list[int]:
    return [int(x) for x in np.random.SeedSequence([int(seed), int(i)]).generate_state(k)]


# -- coverage -------------------------------------------------------------------
def coverage_rep(exp: ExperimentConfig, i: int) -> list[dict]:
    """One replication: squared error and bound per (checkpoint, action)."""
    rng = rep_rng(exp.seed, i)
    cfg = exp.bound_config()
    prob = gen_regression_problem(cfg.d, cfg.r, cfg.A, scale=exp.scale, sigma=cfg.sigma,
                                  eta=cfg.eta, L=cfg.L, rng=rng)
    state = PcrState(cfg, exp.projector_scope)
    checkpoints = set(exp.grid)
    rows = []

    def record(t, st):
        if t not in checkpoints:
            return
        for a in range(cfg.A):
            if st.count(a) == 0:
                rows.append(dict(checkpoint=t, action=a, err=math.nan, bound=None))
                continue
            err = float(np.sum((st.estimate(a) - prob.thetas[a]) ** 2))
            rows.append(dict(checkpoint=t, action=a, err=err, bound=st.empirical_error_bound(a)))

    simulate(prob, state, max(exp.grid), exp.policy, rng, record)
    return rows


@dataclass
class CoverageReport:
    reps: int
    any_violation_frac: float
    per_action_violation_frac: list
    invalid_checkpoints: int
    valid_checkpoints: int
    rows: list = field(default_factory=list)


def summarize_coverage(exp, per_rep: list) -> CoverageReport:
    A = exp.num_actions_A
    any_v = 0
    per_a = np.zeros(A)
    invalid = valid = 0
    for rows in per_rep:
        hit = np.zeros(A, dtype=bool)
        for row in rows:
            if row["bound"] is None:
                invalid += 1
                continue
            valid += 1
            if row["err"] > row["bound"]:
                hit[row["action"]] = True
        per_a += hit
        any_v += bool(hit.any())
    n = len(per_rep)
    return CoverageReport(n, any_v / n, list(per_a / n), invalid, valid)


# -- rate -----------------------------------------------------------------------
def rate_rep(exp: ExperimentConfig, i: int) -> list[dict]:
    rng = rep_rng(exp.seed, i)
    cfg = exp.bound_config()
    prob = gen_regression_problem(cfg.d, cfg.r, cfg.A, scale=exp.scale, sigma=cfg.sigma,
                                  eta=cfg.eta, L=cfg.L, rng=rng)
    state = PcrState(cfg, exp.projector_scope)
    checkpoints = set(exp.grid)
    rows = []

    def record(t, st):
        if t not in checkpoints:
            return
        for a in range(cfg.A):
            if st.count(a) == 0:
                continue
            err = float(np.sum((st.estimate(a) - prob.thetas[a]) ** 2))
            sm = st.summary(a)
            diag = sm.kappa**2 / sm.snr_hat**2 if sm.rank_ok and sm.snr_hat > 0 else math.nan
            rows.append(dict(checkpoint=t, action=a, err=err, bound=st.empirical_error_bound(a),
                             snr_sq_inv_kappa_sq=diag, simp_rate=cfg.r**2 / min(cfg.d, t)))

    simulate(prob, state, max(exp.grid), exp.policy, rng, record)
    return rows


# -- bandit ---------------------------------------------------------------------
def bandit_rep(exp: ExperimentConfig, i: int, return_trace: bool = False):
    env_seed, ep_seed = rep_seeds(exp.seed, i, 2)
    cfg = exp.bound_config()
    env = gen_environment(cfg.d, cfg.r, cfg.A, L=cfg.L, c_x=exp.c_x, sigma=cfg.sigma,
                          eta=cfg.eta, seed=env_seed)
    T = max(exp.grid)
    trace = run_episode(env, T, exp.mode, cfg, seed=ep_seed, projector_scope=exp.projector_scope)
    weak, inter, strong = trace.instantaneous()
    cw, ci, cs = np.cumsum(weak), np.cumsum(inter), np.cumsum(strong)
    gap = np.abs(inter - weak)
    rows = []
    for t in exp.grid:
        b = regret_bound_trace(trace, cfg, c_x=exp.c_x, upto=t)
        rows.append(dict(
            checkpoint=t, weak=float(cw[t - 1]), inter=float(ci[t - 1]), strong=float(cs[t - 1]),
            gap_mean=float(gap[:t].mean()),
            gap_cap=2 * cfg.L * cfg.sigma * math.sqrt(2 * cfg.r * math.log(cfg.A * t / cfg.delta)),
            ellipsoid_term=b.ellipsoid_term, noise_term=b.noise_term,
        ))
    return (rows, trace) if return_trace else rows


# -- panel ----------------------------------------------------------------------
def panel_rep(exp: ExperimentConfig, i: int) -> list[dict]:
    """For each panel size, estimate the last unit under every intervention."""
    cfg = exp.bound_config()
    rows = []
    for k, n_units in enumerate(exp.grid):
        seed = rep_seeds(exp.seed, i, len(exp.grid))[k]
        ds = pnl.gen_panel(n_units, exp.T, exp.T0, cfg.A, cfg.r, sigma=cfg.sigma, L=cfg.L,
                           assignment=exp.assignment, seed=seed, rho=cfg.rho)
        pcfg = pnl.panel_config(ds, cfg.sigma, cfg)
        state = pnl.build_state(ds, n_units - 1, pcfg)
        ident = max(pnl.reformulation_gap(ds, a) for a in range(cfg.A))
        for a in range(cfg.A):
            if state.count(a) == 0:
                rows.append(dict(checkpoint=n_units, action=a, err=math.nan, bound=None,
                                 snr_gate=False, identity_gap=ident))
                continue
            est = pnl.estimate_from_state(ds, state, n_units - 1, a, cfg.sigma)
            rows.append(dict(checkpoint=n_units, action=a, err=est.abs_error, bound=est.bound,
                             snr_gate=est.snr_gate, identity_gap=ident))
    return rows


# -- selftest -------------------------------------------------------------------
def load_selftest_reference() -> dict:
    data = resources.files("adaptive_pcr").joinpath("data/selftest_reference.json").read_text()
    return json.loads(data)


def selftest_value(case: dict) -> float:
    """Evaluate one reference case with the package's own formulas."""
    fn, args = case["fn"], case["args"]
    if fn == "ell_delta":
        return conc.ell_delta(args["n"], args["d"], args["delta"])
    if fn == "noise_opnorm_bound_U":
        return conc.noise_opnorm_bound_U(args["n"], BoundConfig(**args["cfg"]))
    if fn == "ellipsoid_radius_sq":
        return conc.ellipsoid_radius_sq(BoundConfig(**args["cfg"]), args["sigma1"], args["U_n"])
    if fn == "err_term":
        return conc.err_term(BoundConfig(**args["cfg"]), args["n_a"], args["sigma1"])
    if fn == "empirical_bound":
        cfg = BoundConfig(**args["cfg"])
        err = conc.err_term(cfg, args["n_a"], args["sigma1"])
        return conc.empirical_bound_formula(cfg.L, args["sigma_r"] / args["U_n"],
                                            args["sigma1"] / args["sigma_r"], args["sigma_r"], err)
    if fn == "prediction_error_bound":
        return pnl.prediction_error_bound(**args)
    raise ConfigError(f"unknown selftest function {fn!r}")


def selftest_rows(tol: float = 1e-9) -> list[dict]:
    rows = []
    for case in load_selftest_reference()["cases"]:
        got = selftest_value(case)
        ref = case["value"]
        rel = abs(got - ref) / max(abs(ref), 1e-300)
        rows.append(dict(name=case["name"], value=got, reference=ref, rel_err=rel, passed=rel <= tol))
    return rows


# -- dispatch -------------------------------------------------------------------
REP_FUNCS = {"coverage": coverage_rep, "rate": rate_rep, "bandit": bandit_rep, "panel": panel_rep}


def _safe_rep(args):
    kind, exp, i = args
    try:
        return i, REP_FUNCS[kind](exp, i), None
    except (AdaptivePcrError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return i, None, f"{type(exc).__name__}: {exc}"


def run_replications(exp: ExperimentConfig):
    """Run every replication; returns (results, failures) ordered by replication index."""
    jobs = [(exp.kind, exp, i) for i in range(exp.reps)]
    if exp.workers > 1:
        with ProcessPoolExecutor(max_workers=exp.workers) as pool:
            out = list(pool.map(_safe_rep, jobs))
    else:
        out = [_safe_rep(j) for j in jobs]
    results = [(i, rows) for i, rows, err in out if err is None]
    failures = [(i, err) for i, rows, err in out if err is not None]
    return results, failures


def config_dict(exp: ExperimentConfig) -> dict:
    d = asdict(exp)
    d["grid"] = list(exp.grid)
    return d


def with_overrides(exp: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(exp, **{k: v for k, v in kw.items() if v is not None}).validate()
