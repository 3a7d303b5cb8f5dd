"""Dense matrix primitives: truncated SVD, projectors and perturbation distances.

Everything here is a pure function of its inputs. Singular values are always
reported in descending order, and right singular vectors follow a fixed sign
convention so that projectors and bases are reproducible across calls.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRankError, InvalidInputError

#: relative threshold below which a singular value is treated as zero
RANK_TOL = 1e-10


def _as_matrix(A, name="A") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


def rank_threshold(sigma1: float) -> float:
    return RANK_TOL * max(1.0, float(sigma1))


def singular_values(A) -> np.ndarray:
    """All singular values of ``A`` in descending order."""
    A = _as_matrix(A)
    if A.size == 0:
        return np.zeros(0)
    return np.linalg.svd(A, compute_uv=False)


def numerical_rank(A=None, *, sv: np.ndarray | None = None) -> int:
    if sv is None:
        sv = singular_values(A)
    if sv.size == 0:
        return 0
    return int(np.sum(sv > rank_threshold(sv[0])))


def opnorm(A) -> float:
    """Operator (spectral) norm."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


@dataclass(frozen=True)
class TruncatedSvd:
    """Top-k singular triplets of an n x d matrix.

    ``right_vectors`` is d x k, ``left_vectors`` is n x k and ``projector`` is
    the d x d orthogonal projector onto the span of the right vectors.
    """

    singular_values: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    projector: np.ndarray

    @property
    def k(self) -> int:
        return int(self.singular_values.size)

    def reconstruct(self) -> np.ndarray:
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


def _fix_signs(U: np.ndarray, Vt: np.ndarray):
    # largest-magnitude entry of every right vector made nonnegative
    idx = np.argmax(np.abs(Vt), axis=1)
    signs = np.sign(Vt[np.arange(Vt.shape[0]), idx])
    signs[signs == 0] = 1.0
    return U * signs, Vt * signs[:, None]


def truncated_svd(A, k: int) -> TruncatedSvd:
    """Return the top ``min(k, n, d)`` singular triplets of ``A``.

    The full thin SVD is recomputed on every call; no incremental updates.
    """
    A = _as_matrix(A)
    if int(k) != k or k < 1:
        raise InvalidInputError(f"k must be a positive integer, got {k!r}")
    n, d = A.shape
    kk = min(int(k), n, d)
    if kk == 0:
        return TruncatedSvd(np.zeros(0), np.zeros((d, 0)), np.zeros((n, 0)), np.zeros((d, d)))
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    return truncate_decomposition(U, s, Vt, kk)


def truncate_decomposition(U, s, Vt, k: int) -> TruncatedSvd:
    """Build a TruncatedSvd from an existing thin SVD ``U diag(s) Vt``."""
    k = min(int(k), s.size)
    Uk, Vtk = _fix_signs(U[:, :k], Vt[:k])
    V = Vtk.T
    return TruncatedSvd(
        singular_values=s[:k].copy(),
        right_vectors=V,
        left_vectors=Uk,
        projector=V @ V.T,
    )


def condition_number_r(A, r: int) -> float:
    """sigma_1(A) / sigma_r(A), the condition number ignoring zero singular values."""
    sv = singular_values(A)
    if r < 1 or r > sv.size:
        raise InvalidInputError(f"r={r} outside 1..{sv.size}")
    if sv[r - 1] <= rank_threshold(sv[0]):
        raise DegenerateRankError(f"sigma_{r} = {sv[r - 1]:.3g} is below the rank tolerance")
    return float(sv[0] / sv[r - 1])


@dataclass(frozen=True)
class ProjectorPair:
    learned: np.ndarray
    reference: np.ndarray

    def swapped(self) -> "ProjectorPair":
        return ProjectorPair(self.reference, self.learned)


def is_projector(P, atol: float = 1e-10) -> bool:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        return False
    return bool(np.allclose(P, P.T, atol=atol) and np.allclose(P @ P, P, atol=atol))


def projector_distance(pair: ProjectorPair) -> float:
    """Operator-norm distance between the two projectors of ``pair``."""
    P = np.asarray(pair.learned, dtype=float)
    Q = np.asarray(pair.reference, dtype=float)
    if P.shape != Q.shape or P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InvalidInputError(f"projector shapes differ or are not square: {P.shape} vs {Q.shape}")
    D = P - Q
    # symmetric difference: spectral norm is the largest |eigenvalue|
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (D + D.T))), initial=0.0))


def weyl_gap(A, B, i: int) -> float:
    """|sigma_i(A) - sigma_i(B)| for a 1-based index ``i``."""
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    if A.shape != B.shape:
        raise InvalidInputError(f"shape mismatch {A.shape} vs {B.shape}")
    m = min(A.shape)
    if i < 1 or i > m:
        raise InvalidInputError(f"index {i} outside 1..{m}")
    return float(abs(singular_values(A)[i - 1] - singular_values(B)[i - 1]))


def wedin_bound(A, E, r: int) -> float:
    """2 ||E||_op / (sigma_r(A) - sigma_{r+1}(A)); inf when the gap vanishes."""
    sv = singular_values(A)
    nxt = sv[r] if r < sv.size else 0.0
    gap = sv[r - 1] - nxt
    if gap <= 0:
        return float("inf")
    return 2.0 * opnorm(E) / gap


def orthonormal_range_basis(P) -> np.ndarray:
    """Orthonormal basis of range(P) for a symmetric projector, via eigh."""
    P = np.asarray(P, dtype=float)
    w, Q = np.linalg.eigh(0.5 * (P + P.T))
    return Q[:, w > 0.5]
