import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptive_pcr.errors import DegenerateRankError, InvalidInputError
from adaptive_pcr.linalg import (
    ProjectorPair,
    condition_number_r,
    is_projector,
    numerical_rank,
    projector_distance,
    truncated_svd,
    wedin_bound,
    weyl_gap,
)


def eig_projector(A, k):
    """Oracle: top-k eigenvectors of A^T A via the symmetric eigensolver."""
    w, Q = np.linalg.eigh(A.T @ A)
    V = Q[:, np.argsort(w)[::-1][:k]]
    return V @ V.T


def random_projector(rng, d, k):
    Q, _ = np.linalg.qr(rng.standard_normal((d, k)))
    return Q @ Q.T


shapes = st.tuples(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))


# -- truncated_svd ---------------------------------------------------------------
def test_truncated_svd_diagonal():
    t = truncated_svd(np.diag([3.0, 1.0]), 1)
    np.testing.assert_allclose(t.singular_values, [3.0])
    np.testing.assert_allclose(t.projector, np.diag([1.0, 0.0]), atol=1e-14)


def test_truncated_svd_full_rank_identity():
    t = truncated_svd(np.eye(2), 2)
    np.testing.assert_allclose(t.projector, np.eye(2), atol=1e-14)


def test_truncated_svd_matches_eigen_oracle():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((5, 3))
    t = truncated_svd(A, 2)
    assert np.linalg.norm(t.projector - eig_projector(A, 2), 2) <= 1e-8


def test_truncated_svd_caps_k():
    t = truncated_svd(np.ones((2, 5)), 4)
    assert t.k == 2
    assert t.right_vectors.shape == (5, 2)


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_truncated_svd_rejects_non_finite(bad):
    A = np.eye(3)
    A[1, 2] = bad
    with pytest.raises(InvalidInputError):
        truncated_svd(A, 1)


@pytest.mark.parametrize("k", [0, -1, 1.5])
def test_truncated_svd_rejects_bad_k(k):
    with pytest.raises(InvalidInputError):
        truncated_svd(np.eye(2), k)


def test_sign_convention_is_deterministic():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((6, 4))
    t1, t2 = truncated_svd(A, 3), truncated_svd(-A, 3)
    for t in (t1, t2):
        V = t.right_vectors
        idx = np.argmax(np.abs(V), axis=0)
        assert np.all(V[idx, np.arange(V.shape[1])] >= 0)
    # negating A flips the left vectors only
    np.testing.assert_allclose(t1.right_vectors, t2.right_vectors, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(shapes)
def test_truncated_svd_invariants(shape):
    n, d, seed = shape
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    k = max(1, min(n, d) - 1)
    t = truncated_svd(A, k)
    s = t.singular_values
    assert np.all(s >= 0) and np.all(np.diff(s) <= 0)
    np.testing.assert_allclose(t.right_vectors.T @ t.right_vectors, np.eye(t.k), atol=1e-10)
    assert is_projector(t.projector)
    # reconstruction of the rank-k truncation
    U, sf, Vt = np.linalg.svd(A, full_matrices=False)
    Ak = (U[:, :k] * sf[:k]) @ Vt[:k]
    assert np.linalg.norm(Ak - t.reconstruct(), 2) <= 1e-8 * max(sf[0], 1e-300)


def test_numerical_rank_tolerance():
    assert numerical_rank(np.diag([1.0, 1e-11])) == 1
    assert numerical_rank(np.diag([1.0, 1e-9])) == 2
    assert numerical_rank(np.zeros((3, 2))) == 0


# -- condition number ------------------------------------------------------------
def test_condition_number_examples():
    assert condition_number_r(np.diag([4.0, 2.0, 0.0]), 2) == pytest.approx(2.0)
    assert condition_number_r(np.eye(3), 3) == pytest.approx(1.0)


def test_condition_number_matches_oracle():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((6, 4))
    ev = np.sort(np.linalg.eigvalsh(A.T @ A))[::-1]
    oracle = np.sqrt(ev[0] / ev[3])
    assert condition_number_r(A, 4) == pytest.approx(oracle, rel=1e-10)


def test_condition_number_degenerate():
    with pytest.raises(DegenerateRankError):
        condition_number_r(np.diag([4.0, 2.0, 0.0]), 3)
    with pytest.raises(InvalidInputError):
        condition_number_r(np.eye(2), 3)


# -- projector distance ----------------------------------------------------------
def test_projector_distance_examples():
    P = np.diag([1.0, 0.0])
    assert projector_distance(ProjectorPair(P, P)) == 0.0
    assert projector_distance(ProjectorPair(P, np.diag([0.0, 1.0]))) == pytest.approx(1.0)


def test_projector_distance_matches_oracle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        P, Q = random_projector(rng, 5, 2), random_projector(rng, 5, 2)
        oracle = np.max(np.abs(np.linalg.eigvals(P - Q)).real)
        assert projector_distance(ProjectorPair(P, Q)) == pytest.approx(oracle, abs=1e-10)


def test_projector_distance_shape_mismatch():
    with pytest.raises(InvalidInputError):
        projector_distance(ProjectorPair(np.eye(2), np.eye(3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_projector_distance_symmetric_and_capped(d, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, d))
    pair = ProjectorPair(random_projector(rng, d, k), random_projector(rng, d, k))
    dist = projector_distance(pair)
    assert dist == projector_distance(pair.swapped())
    assert dist <= 1.0 + 1e-12
    assert np.isclose(np.trace(pair.learned), np.trace(pair.reference))


# -- Weyl and Wedin --------------------------------------------------------------
def test_weyl_gap_examples():
    A = np.diag([3.0, 1.0])
    assert weyl_gap(A, A, 1) == 0.0 and weyl_gap(A, A, 2) == 0.0
    B = np.diag([2.0, 1.0])
    assert weyl_gap(A, B, 1) == pytest.approx(1.0)
    assert np.linalg.norm(A - B, 2) == pytest.approx(1.0)


def test_weyl_gap_index_and_shape_errors():
    with pytest.raises(InvalidInputError):
        weyl_gap(np.eye(2), np.eye(2), 3)
    with pytest.raises(InvalidInputError):
        weyl_gap(np.eye(2), np.eye(2), 0)
    with pytest.raises(InvalidInputError):
        weyl_gap(np.eye(2), np.eye(3), 1)


@settings(max_examples=60, deadline=None)
@given(shapes)
def test_weyl_inequality(shape):
    n, d, seed = shape
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((n, d)), rng.standard_normal((n, d))
    for i in range(1, min(n, d) + 1):
        assert weyl_gap(A, B, i) <= np.linalg.norm(A - B, 2)


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 9), st.integers(3, 9), st.integers(0, 2**32 - 1))
def test_wedin_inequality(n, d, seed):
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, min(n, d)))
    A = rng.standard_normal((n, r)) @ rng.standard_normal((r, d)) * 3
    E = 0.1 * rng.standard_normal((n, d))
    dist = projector_distance(ProjectorPair(truncated_svd(A + E, r).projector, truncated_svd(A, r).projector))
    assert dist <= wedin_bound(A, E, r)
