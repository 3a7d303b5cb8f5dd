"""Linear contextual bandit with noisy contexts and a PCR-based UCB policy.

Each round the learner sees Z_t = X_t + eps_t, where the true context X_t lies
in an unknown r-dimensional subspace, picks an action and receives
Y_t = <theta(a_t), X_t> + xi_t. Three regrets are tracked:

* weak:         sum <theta(a*_t) - theta(a_t), Z_t>,   a*_t = argmax_a <theta(a), Z_t>
* intermediate: sum <theta(a*_t) - theta(a_t), X_t>
* strong:       sum <theta(a#_t) - theta(a_t), X_t>,   a#_t = argmax_a <theta(a), X_t>
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .concentration import BoundConfig
from .design import random_subspace, slopes_on_sphere
from .errors import ConfigError, IncompleteTraceError, InvalidInputError
from .pcr import PER_ACTION, PcrState

MODES = ("ucb_ellipsoid", "ucb_ball", "greedy")

#: the reward floor max_a <theta(a), X_t> >= REWARD_FLOOR * sqrt(d)
REWARD_FLOOR = 0.5

TRACE_COLUMNS = (
    "t", "action", "reward",
    "weak_inst", "inter_inst", "strong_inst",
    "weak_cum", "inter_cum", "strong_cum",
    "ucb_radius", "ell_norm",
)


@dataclass(frozen=True)
class BanditEnv:
    """Ground truth of a noisy-context bandit.

    ``subspace_basis`` is d x r orthonormal and ``slopes`` is A x d with rows in
    its span. True contexts have norm in ``[c_x sqrt(d) / 2, c_x sqrt(d)]``.
    """

    subspace_basis: np.ndarray
    slopes: np.ndarray
    sigma: float
    eta: float
    L: float
    c_x: float
    seed: int | None = None

    @property
    def d(self) -> int:
        return self.subspace_basis.shape[0]

    @property
    def r(self) -> int:
        return self.subspace_basis.shape[1]

    @property
    def A(self) -> int:
        return self.slopes.shape[0]

    def sample_context(self, rng, max_tries: int = 10_000) -> np.ndarray:
        """Rejection-sample a true context meeting the reward floor."""
        d, r = self.d, self.r
        top = self.c_x * math.sqrt(d)
        floor = REWARD_FLOOR * math.sqrt(d)
        for _ in range(max_tries):
            u = rng.standard_normal(r)
            u /= np.linalg.norm(u)
            x = self.subspace_basis @ (u * rng.uniform(0.5 * top, top))
            if np.max(self.slopes @ x) >= floor:
                return x
        raise ConfigError("context sampler could not meet the reward floor")


def gen_environment(d, r, A, *, L=1.0, c_x=1.0, sigma=0.1, eta=0.1, seed=None,
                    min_accept=0.01) -> BanditEnv:
    """Random subspace, slopes on the L-sphere, and a feasibility check of the sampler."""
    if not (1 <= r <= d) or A < 1:
        raise ConfigError(f"need 1 <= r <= d and A >= 1 (d={d}, r={r}, A={A})")
    if L * c_x < REWARD_FLOOR:
        raise ConfigError(f"L * c_x = {L * c_x} cannot reach the reward floor {REWARD_FLOOR} sqrt(d)")
    rng = np.random.default_rng(seed)
    B = random_subspace(rng, d, r)
    env = BanditEnv(B, slopes_on_sphere(rng, B, A, L), float(sigma), float(eta), float(L),
                    float(c_x), seed)
    # pilot acceptance rate of the context sampler
    probe = np.random.default_rng([0 if seed is None else seed, 1])
    u = probe.standard_normal((2000, r))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    top = c_x * math.sqrt(d)
    X = (u * probe.uniform(0.5 * top, top, size=(2000, 1))) @ B.T
    rate = np.mean(np.max(X @ env.slopes.T, axis=1) >= REWARD_FLOOR * math.sqrt(d))
    if rate < min_accept:
        raise ConfigError(f"reward floor accepted only {rate:.2%} of pilot contexts")
    return env


def action_scores(state: PcrState, z, mode: str, cfg: BoundConfig | None = None):
    """Per-action (score, radius, elliptical norm); +inf scores force exploration."""
    if mode not in MODES:
        raise InvalidInputError(f"mode must be one of {MODES}")
    z = np.asarray(z, dtype=float)
    A = state.A
    scores = np.full(A, np.inf)
    radii = np.full(A, np.inf)
    norms = np.full(A, np.inf)
    for a in range(A):
        if state.count(a) == 0:
            continue
        sm = state.summary(a)
        if not sm.rank_ok:
            continue
        mean = float(state.estimate(a) @ z)
        if mode == "greedy":
            scores[a] = mean
            radii[a] = 0.0
            norms[a] = state.ellipsoid_norm(a, z)
        elif mode == "ucb_ellipsoid":
            radii[a] = math.sqrt(state.ellipsoid_radius_sq(a))
            norms[a] = state.ellipsoid_norm(a, z)
            scores[a] = mean + radii[a] * norms[a]
        else:
            b = state.empirical_error_bound(a)
            norms[a] = state.ellipsoid_norm(a, z)
            if b is None:
                continue
            radii[a] = math.sqrt(b)
            scores[a] = mean + radii[a] * float(np.linalg.norm(z))
    return scores, radii, norms


def select_action(state: PcrState, z, mode: str = "ucb_ellipsoid", cfg: BoundConfig | None = None) -> int:
    """Highest-scoring action; ties go to the lowest index."""
    scores, _, _ = action_scores(state, z, mode, cfg)
    return int(np.argmax(scores))


@dataclass
class BanditTrace:
    """Per-round record of one episode. ``slopes`` holds the ground truth."""

    X: np.ndarray
    Z: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    ucb_radius: np.ndarray
    ell_norm: np.ndarray
    slopes: np.ndarray | None
    final_beta: np.ndarray
    mode: str = "ucb_ellipsoid"
    beta_path: np.ndarray | None = None

    @property
    def T(self) -> int:
        return int(self.actions.size)

    def _truth(self):
        if self.slopes is None or self.X is None:
            raise IncompleteTraceError("trace has no ground-truth slopes or contexts")
        return self.slopes

    def best_actions(self):
        """(a*_t, a#_t): optimal actions scored on Z_t and on X_t."""
        th = self._truth()
        return np.argmax(self.Z @ th.T, axis=1), np.argmax(self.X @ th.T, axis=1)

    def instantaneous(self):
        """Per-round weak, intermediate and strong regret."""
        th = self._truth()
        a_star, a_box = self.best_actions()
        d_star = th[a_star] - th[self.actions]
        weak = np.einsum("ij,ij->i", d_star, self.Z)
        inter = np.einsum("ij,ij->i", d_star, self.X)
        strong = np.einsum("ij,ij->i", th[a_box] - th[self.actions], self.X)
        return weak, inter, strong

    def to_csv(self, path_or_buf=None) -> str:
        weak, inter, strong = self.instantaneous() if self.T else (np.zeros(0),) * 3
        cols = [np.cumsum(weak), np.cumsum(inter), np.cumsum(strong)]
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for t in range(self.T):
            w.writerow([
                t + 1, int(self.actions[t]), repr(float(self.rewards[t])),
                repr(float(weak[t])), repr(float(inter[t])), repr(float(strong[t])),
                repr(float(cols[0][t])), repr(float(cols[1][t])), repr(float(cols[2][t])),
                repr(float(self.ucb_radius[t])), repr(float(self.ell_norm[t])),
            ])
        text = out.getvalue()
        if path_or_buf is not None:
            with open(path_or_buf, "w") as fh:
                fh.write(text)
        return text


@dataclass(frozen=True)
class Regrets:
    weak: float
    intermediate: float
    strong: float


def regrets(trace: BanditTrace) -> Regrets:
    """Cumulative weak, intermediate and strong regret of a trace."""
    weak, inter, strong = trace.instantaneous()
    return Regrets(float(weak.sum()), float(inter.sum()), float(strong.sum()))


@dataclass(frozen=True)
class RegretBound:
    ellipsoid_term: float
    noise_term: float

    @property
    def total(self) -> float:
        return self.ellipsoid_term + self.noise_term


def regret_bound_trace(trace: BanditTrace, cfg: BoundConfig, *, c_x: float = 1.0,
                       c_clamp: float | None = None, upto: int | None = None) -> RegretBound:
    """Diagnostic upper bound on intermediate regret, split into two terms.

    ``c_clamp`` caps the instantaneous regret; it defaults to 2 L c_x sqrt(d).
    The ellipsoid term is c sqrt(n max(1, 4 beta_n / c^2) sum_t min(1, ||Z_t||^2)),
    which reduces to 2 sqrt(n max(1, beta_n) sum_t min(1, ||Z_t||^2)) when c = 2.
    ``upto`` evaluates the bound on the first ``upto`` rounds only.
    """
    n = trace.T if upto is None else int(upto)
    if n == 0:
        return RegretBound(0.0, 0.0)
    if n > trace.T:
        raise InvalidInputError(f"upto={n} exceeds the trace length {trace.T}")
    L, sigma, r = cfg.L, cfg.sigma, cfg.r
    if c_clamp is None:
        c_clamp = 2.0 * L * c_x * math.sqrt(cfg.d)
    if upto is not None and trace.beta_path is not None:
        beta_n = float(trace.beta_path[n - 1])
    else:
        beta_n = float(np.max(trace.final_beta)) if trace.final_beta.size else 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        ell_sq = np.minimum(1.0, np.nan_to_num(trace.ell_norm[:n], nan=np.inf) ** 2)
    ellipsoid = c_clamp * math.sqrt(n * max(1.0, 4.0 * beta_n / c_clamp**2) * float(ell_sq.sum()))
    noise = 2.0 * L * n * sigma * math.sqrt(2.0 * r * math.log(cfg.A * n / cfg.delta))
    return RegretBound(ellipsoid, noise)


def run_episode(env: BanditEnv, T: int, mode: str = "ucb_ellipsoid", cfg: BoundConfig | None = None,
                seed=None, projector_scope: str = PER_ACTION) -> BanditTrace:
    """Play ``T`` rounds; deterministic given ``env`` and ``seed``."""
    if T < 1:
        raise InvalidInputError("horizon T must be >= 1")
    if mode not in MODES:
        raise InvalidInputError(f"mode must be one of {MODES}")
    if cfg is None:
        cfg = BoundConfig(d=env.d, r=env.r, num_actions_A=env.A, sigma=env.sigma,
                          eta=env.eta, slope_bound_L=env.L)
    if (cfg.d, cfg.r, cfg.A) != (env.d, env.r, env.A):
        raise ConfigError("BoundConfig dimensions disagree with the environment")
    rng = np.random.default_rng(seed)
    state = PcrState(cfg, projector_scope=projector_scope)
    d = env.d
    X = np.empty((T, d))
    Z = np.empty((T, d))
    actions = np.empty(T, dtype=int)
    rewards = np.empty(T)
    radius = np.empty(T)
    norms = np.empty(T)
    beta_path = np.zeros(T)
    beta = np.zeros(env.A)
    for t in range(T):
        x = env.sample_context(rng)
        z = x + env.sigma * rng.standard_normal(d)
        scores, radii, ells = action_scores(state, z, mode, cfg)
        a = int(np.argmax(scores))
        y = float(env.slopes[a] @ x + env.eta * rng.standard_normal())
        state.observe(z, a, y)
        X[t], Z[t], actions[t], rewards[t] = x, z, a, y
        radius[t], norms[t] = radii[a], ells[a]
        beta = np.array([state.ellipsoid_radius_sq(b) if state.count(b) else 0.0 for b in range(env.A)])
        beta_path[t] = beta.max()
    return BanditTrace(X, Z, actions, rewards, radius, norms, env.slopes.copy(), beta, mode, beta_path)


def next_sample_decomposition(theta_hat, theta, x, eps):
    """Split the next-round prediction error <theta_hat, x + eps> - <theta, x>.

    Returns ``(noise_part, estimation_part)`` = (<theta_hat, eps>, <theta_hat - theta, x>),
    whose sum equals the prediction error exactly.
    """
    theta_hat, theta, x, eps = (np.asarray(v, dtype=float) for v in (theta_hat, theta, x, eps))
    return float(theta_hat @ eps), float((theta_hat - theta) @ x)
