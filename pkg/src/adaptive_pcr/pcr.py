"""Online principal component regression with per-action data buffers.

A :class:`PcrState` accumulates noisy covariate rows and outcomes for each
action. Estimates are recomputed from scratch (a full thin SVD) whenever the
buffers change, then cached until the next observation.

Actions are indexed ``0 .. A-1``.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, fields

import numpy as np

from . import concentration as conc
from .concentration import BoundConfig
from .errors import DegenerateRankError, InvalidInputError, MalformedInputError, NoDataError
from .linalg import TruncatedSvd, numerical_rank, orthonormal_range_basis, truncate_decomposition

log = logging.getLogger(__name__)

PER_ACTION = "per_action"
GLOBAL = "global"
SCOPES = (PER_ACTION, GLOBAL)

#: minimum empirical snr before the finite-sample guarantee applies
SNR_GATE = 2.0


class _RowBuffer:
    """Append-only row storage with amortized doubling."""

    def __init__(self, width: int, capacity: int = 16):
        self._data = np.empty((capacity, width))
        self._n = 0

    def append(self, row):
        if self._n == self._data.shape[0]:
            grown = np.empty((2 * self._data.shape[0], self._data.shape[1]))
            grown[: self._n] = self._data[: self._n]
            self._data = grown
        self._data[self._n] = row
        self._n += 1

    def view(self) -> np.ndarray:
        return self._data[: self._n]

    def __len__(self):
        return self._n


@dataclass(frozen=True)
class SpectralSummary:
    """Quantities the error bounds are built from, for one action."""

    count: int
    rank: int
    sigma_1: float
    sigma_r: float
    sigma_r1: float
    U_n: float
    snr_hat: float

    @property
    def rank_ok(self) -> bool:
        # sigma_r is stored as 0 when rank < r
        return self.sigma_r > 0

    @property
    def kappa(self) -> float:
        return self.sigma_1 / self.sigma_r if self.sigma_r > 0 else math.inf

    @property
    def gate_ok(self) -> bool:
        return self.rank_ok and self.snr_hat >= SNR_GATE


@dataclass(frozen=True)
class SnrReport:
    action: int
    sigma_r_Z: float
    U_n: float
    empirical_snr: float
    true_snr: float | None = None


@dataclass(frozen=True)
class RateDiagnostic:
    snr_sq_inv_kappa_sq: float
    simp_rate: float


class PcrState:
    """Buffers and cached fits for adaptive PCR over ``A`` actions.

    Parameters
    ----------
    cfg : BoundConfig
        Supplies d, r, A, rho and every constant used by the bounds.
    projector_scope : {"per_action", "global"}
        Learn the subspace from each action's own rows, or from all rows.
    """

    def __init__(self, cfg: BoundConfig, projector_scope: str = PER_ACTION):
        if projector_scope not in SCOPES:
            raise InvalidInputError(f"projector_scope must be one of {SCOPES}")
        self.cfg = cfg
        self.projector_scope = projector_scope
        self.d = int(cfg.d)
        self.r = int(cfg.r)
        self.A = int(cfg.A)
        self._Z = [_RowBuffer(self.d) for _ in range(self.A)]
        self._Y = [_RowBuffer(1) for _ in range(self.A)]
        self._rounds = [_RowBuffer(1) for _ in range(self.A)]
        self._pooled = _RowBuffer(self.d)
        self.n = 0
        self.clamp_events = 0
        self._cache: dict = {}

    # -- data -------------------------------------------------------------
    def observe(self, z, action: int, y: float) -> "PcrState":
        z = np.asarray(z, dtype=float).reshape(-1)
        if z.size != self.d:
            raise InvalidInputError(f"covariate has length {z.size}, expected {self.d}")
        if not np.all(np.isfinite(z)) or not math.isfinite(float(y)):
            raise InvalidInputError("observation has non-finite entries")
        if not (0 <= int(action) < self.A) or int(action) != action:
            raise InvalidInputError(f"action {action!r} outside 0..{self.A - 1}")
        a = int(action)
        self._Z[a].append(z)
        self._Y[a].append(float(y))
        self._rounds[a].append(self.n)
        self._pooled.append(z)
        self.n += 1
        if self.projector_scope == GLOBAL:
            self._cache.clear()
        else:
            # only the observed action's fits are stale
            for key in [k for k in self._cache if k[1] == a]:
                del self._cache[key]
        return self

    def count(self, action: int) -> int:
        return len(self._Z[action])

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(b) for b in self._Z], dtype=int)

    def Z(self, action: int) -> np.ndarray:
        return self._Z[action].view()

    def Y(self, action: int) -> np.ndarray:
        return self._Y[action].view()[:, 0]

    def Z_pooled(self) -> np.ndarray:
        return self._pooled.view()

    def rounds(self, action: int) -> np.ndarray:
        return self._rounds[action].view()[:, 0].astype(int)

    def _require(self, action: int):
        if not (0 <= action < self.A):
            raise InvalidInputError(f"action {action!r} outside 0..{self.A - 1}")
        if self.count(action) == 0:
            raise NoDataError(f"action {action} has no observations")

    # -- spectral caches --------------------------------------------------
    def _decompose(self, key, M):
        hit = self._cache.get(("svd", key))
        if hit is None:
            U, s, Vt = np.linalg.svd(M, full_matrices=False)
            hit = (truncate_decomposition(U, s, Vt, self.r), s)
            self._cache[("svd", key)] = hit
        return hit

    def spectrum(self, action: int) -> np.ndarray:
        """All singular values of Z_n(a)."""
        self._require(action)
        return self._decompose(action, self.Z(action))[1]

    def subspace(self, action: int) -> TruncatedSvd:
        """Learned rank-r subspace used to estimate ``action``."""
        self._require(action)
        if self.projector_scope == GLOBAL:
            return self._decompose("pooled", self.Z_pooled())[0]
        return self._decompose(action, self.Z(action))[0]

    def U_n(self) -> float:
        return conc.noise_opnorm_bound_U(max(self.n, 1), self.cfg)

    def summary(self, action: int) -> SpectralSummary:
        s = self.spectrum(action)
        r = self.r
        U = self.U_n()
        rank = numerical_rank(sv=s)
        sig_r = float(s[r - 1]) if rank >= r else 0.0
        sig_r1 = float(s[r]) if s.size > r else 0.0
        return SpectralSummary(
            count=self.count(action),
            rank=rank,
            sigma_1=float(s[0]) if s.size else 0.0,
            sigma_r=sig_r,
            sigma_r1=sig_r1,
            U_n=U,
            snr_hat=sig_r / U if U > 0 else (math.inf if sig_r > 0 else 0.0),
        )

    # -- estimation -------------------------------------------------------
    def estimate(self, action: int, *, clamp: bool = True) -> np.ndarray:
        """Regularized PCR estimate of theta(a), optionally clamped to the L-ball."""
        self._require(action)
        key = ("theta", action, clamp)
        if key in self._cache:
            return self._cache[key]
        Z, Y = self.Z(action), self.Y(action)
        rho = self.cfg.rho
        if self.projector_scope == PER_ACTION:
            tsvd = self.subspace(action)
            s = tsvd.singular_values
            coef = (s / (s**2 + rho)) * (tsvd.left_vectors.T @ Y)
            theta = tsvd.right_vectors @ coef
        else:
            V = self.subspace(action).right_vectors
            W = Z @ V
            x = np.linalg.solve(W.T @ W + rho * np.eye(V.shape[1]), W.T @ Y)
            theta = V @ x
        if clamp:
            nrm = float(np.linalg.norm(theta))
            L = self.cfg.L
            if nrm > L:
                self.clamp_events += 1
                log.debug("clamping estimate for action %d: norm %.4g > L=%.4g", action, nrm, L)
                theta = theta * (L / nrm) if nrm > 0 else theta
        self._cache[key] = theta
        return theta

    def error_bound_value(self, action: int) -> float:
        """Empirical guarantee on the squared error, evaluated without the snr gate."""
        sm = self.summary(action)
        if not sm.rank_ok:
            raise DegenerateRankError(f"rank(Z(a)) = {sm.rank} < r = {self.r} for action {action}")
        err = conc.err_term(self.cfg, sm.count, sm.sigma_1)
        return conc.empirical_bound_formula(self.cfg.L, sm.snr_hat, sm.kappa, sm.sigma_r, err)

    def empirical_error_bound(self, action: int, *, strict: bool = False) -> float | None:
        """Squared-error bound for ``action`` or ``None`` before the validity gate.

        The gate requires rank(Z_n(a)) = r and empirical snr >= 2. With
        ``strict=True`` a rank-deficient buffer raises DegenerateRankError.
        """
        sm = self.summary(action)
        if not sm.rank_ok:
            if strict:
                raise DegenerateRankError(f"rank(Z(a)) = {sm.rank} < r = {self.r}")
            return None
        if not sm.gate_ok:
            return None
        return self.error_bound_value(action)

    def ellipsoid_norm(self, action: int, z) -> float:
        """||z|| in the pseudo-inverse of V(a) = Zhat^T Zhat + rho P, restricted to range(P)."""
        z = np.asarray(z, dtype=float)
        tsvd = self.subspace(action)
        c = tsvd.right_vectors.T @ z
        if self.projector_scope == PER_ACTION:
            return float(np.sqrt(np.sum(c**2 / (tsvd.singular_values**2 + self.cfg.rho))))
        W = self.Z(action) @ tsvd.right_vectors
        M = W.T @ W + self.cfg.rho * np.eye(W.shape[1])
        return float(np.sqrt(c @ np.linalg.solve(M, c)))

    def ellipsoid_radius_sq(self, action: int) -> float:
        sm = self.summary(action)
        return conc.ellipsoid_radius_sq(self.cfg, sm.sigma_1, sm.U_n)

    def rate_diagnostic(self, action: int) -> RateDiagnostic:
        sm = self.summary(action)
        if not sm.rank_ok:
            raise DegenerateRankError(f"rank(Z(a)) = {sm.rank} < r = {self.r}")
        return RateDiagnostic(
            snr_sq_inv_kappa_sq=sm.kappa**2 / sm.snr_hat**2,
            simp_rate=self.r**2 / min(self.d, self.n),
        )

    def snr_report(self, action: int, true_X=None) -> SnrReport:
        sm = self.summary(action)
        true_snr = None
        if true_X is not None:
            sx = np.linalg.svd(np.asarray(true_X, dtype=float), compute_uv=False)
            sr = float(sx[self.r - 1]) if sx.size >= self.r else 0.0
            true_snr = sr / sm.U_n if sm.U_n > 0 else math.inf
        return SnrReport(action, sm.sigma_r, sm.U_n, sm.snr_hat, true_snr)

    # -- snapshot ---------------------------------------------------------
    def to_csv(self, path_or_buf=None) -> str:
        """Write the buffers as CSV with ``# key=value`` config header lines."""
        out = io.StringIO()
        for f in fields(self.cfg):
            out.write(f"# {f.name}={getattr(self.cfg, f.name)!r}\n")
        out.write(f"# projector_scope={self.projector_scope!r}\n")
        out.write(",".join(["round", "action", "y"] + [f"z{j}" for j in range(self.d)]) + "\n")
        rows = []
        for a in range(self.A):
            for rnd, y, z in zip(self.rounds(a), self.Y(a), self.Z(a)):
                rows.append((int(rnd), a, float(y), z))
        rows.sort(key=lambda t: t[0])
        for rnd, a, y, z in rows:
            out.write(",".join([str(rnd), str(a), repr(y)] + [repr(float(v)) for v in z]) + "\n")
        text = out.getvalue()
        if path_or_buf is not None:
            if hasattr(path_or_buf, "write"):
                path_or_buf.write(text)
            else:
                with open(path_or_buf, "w") as fh:
                    fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "PcrState":
        import ast

        if hasattr(source, "read"):
            text = source.read()
        elif isinstance(source, str) and "\n" in source:
            text = source
        else:
            with open(source) as fh:
                text = fh.read()
        meta, body = {}, []
        for line in text.splitlines():
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k] = ast.literal_eval(v)
            elif line.strip():
                body.append(line)
        scope = meta.pop("projector_scope", PER_ACTION)
        state = cls(BoundConfig(**meta), projector_scope=scope)
        for line in body[1:]:
            cells = line.split(",")
            if len(cells) != 3 + state.d:
                raise MalformedInputError(f"expected {3 + state.d} cells, got {len(cells)}")
            state.observe([float(c) for c in cells[3:]], int(cells[1]), float(cells[2]))
        return state


# -- functional interface ----------------------------------------------------
def observe(state: PcrState, z, action: int, y: float) -> PcrState:
    return state.observe(z, action, y)


def estimate(state: PcrState, action: int, *, clamp: bool = True) -> np.ndarray:
    return state.estimate(action, clamp=clamp)


def empirical_error_bound(state: PcrState, action: int, *, strict: bool = False):
    return state.empirical_error_bound(action, strict=strict)


def rate_diagnostic(state: PcrState, action: int) -> RateDiagnostic:
    return state.rate_diagnostic(action)


def snr_report(state: PcrState, action: int, true_X=None) -> SnrReport:
    return state.snr_report(action, true_X)


def oracle_ridge_in_subspace(Z, Y, P, rho) -> np.ndarray:
    """Ridge regression restricted to range(P), by a dense solve in a basis of range(P).

    Minimizes ||Z P theta - Y||^2 + rho ||theta||^2 over theta in range(P).
    """
    if not rho > 0:
        raise InvalidInputError(f"rho must be positive, got {rho}")
    Z = np.asarray(Z, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    P = np.asarray(P, dtype=float)
    if Z.shape[0] != Y.size or Z.shape[1] != P.shape[0]:
        raise InvalidInputError("inconsistent shapes")
    B = orthonormal_range_basis(P)
    if B.shape[1] == 0:
        return np.zeros(Z.shape[1])
    W = Z @ P @ B
    x = np.linalg.solve(W.T @ W + rho * np.eye(B.shape[1]), W.T @ Y)
    return B @ x
