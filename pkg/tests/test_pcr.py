import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from adaptive_pcr import concentration as conc
from adaptive_pcr.concentration import BoundConfig
from adaptive_pcr.design import draw_covariates, gen_regression_problem, simulate
from adaptive_pcr.errors import DegenerateRankError, InvalidInputError, NoDataError
from adaptive_pcr.pcr import PcrState, oracle_ridge_in_subspace


def normal_equations_oracle(Z, Y, P, rho):
    """Oracle in the ambient space: (P Z^T Z P + rho I)^{-1} P Z^T Y.

    The matrix maps range(P) to itself and acts as rho on the complement,
    so the solution is the ridge minimizer restricted to range(P).
    """
    d = Z.shape[1]
    return np.linalg.solve(P @ Z.T @ Z @ P + rho * np.eye(d), P @ Z.T @ Y)


def fill(state, Z, actions, Y):
    for z, a, y in zip(Z, actions, Y):
        state.observe(z, int(a), float(y))
    return state


def random_state(rng, n, d, r, A=1, scope="per_action", rho=0.01):
    cfg = BoundConfig(d=d, r=r, num_actions_A=A, rho=rho, slope_bound_L=1e6)
    Z = rng.standard_normal((n, r)) @ rng.standard_normal((r, d)) + 0.1 * rng.standard_normal((n, d))
    Y = rng.standard_normal(n)
    acts = rng.integers(A, size=n)
    return fill(PcrState(cfg, scope), Z, acts, Y)


# -- observe ---------------------------------------------------------------------
def test_observe_counts():
    st_ = PcrState(BoundConfig(d=3, r=1, num_actions_A=2))
    st_.observe([1, 2, 3], 0, 1.0)
    assert st_.count(0) == 1 and st_.n == 1
    st_.observe([0, 0, 1], 1, 0.5)
    assert list(st_.counts) == [1, 1] and st_.n == 2
    assert st_.Z_pooled().shape == (2, 3)


def test_observe_interleaved_total():
    rng = np.random.default_rng(0)
    s = random_state(rng, 100, 4, 2, A=3)
    assert s.counts.sum() == 100 == s.n
    for a in range(3):
        assert s.Z(a).shape[0] == s.Y(a).size == s.count(a)


@pytest.mark.parametrize("z,a,y", [([1, 2], 0, 1.0), ([1, 2, np.nan], 0, 1.0), ([1, 2, 3], 2, 1.0),
                                   ([1, 2, 3], -1, 1.0), ([1, 2, 3], 0, math.inf)])
def test_observe_rejects(z, a, y):
    with pytest.raises(InvalidInputError):
        PcrState(BoundConfig(d=3, r=1, num_actions_A=2)).observe(z, a, y)


def test_bad_scope():
    with pytest.raises(InvalidInputError):
        PcrState(BoundConfig(), projector_scope="shared")


# -- estimate --------------------------------------------------------------------
def test_estimate_identity_design():
    s = PcrState(BoundConfig(d=2, r=2, rho=1.0, slope_bound_L=10.0))
    fill(s, np.eye(2), [0, 0], [3.0, 4.0])
    np.testing.assert_allclose(s.estimate(0), [1.5, 2.0], atol=1e-12)


def test_estimate_zero_response():
    rng = np.random.default_rng(1)
    s = PcrState(BoundConfig(d=4, r=2))
    fill(s, rng.standard_normal((10, 4)), [0] * 10, np.zeros(10))
    np.testing.assert_array_equal(s.estimate(0), np.zeros(4))


def test_estimate_no_data():
    s = PcrState(BoundConfig(d=2, r=1, num_actions_A=2))
    s.observe([1, 0], 0, 1.0)
    with pytest.raises(NoDataError):
        s.estimate(1)


@pytest.mark.parametrize("scope", ["per_action", "global"])
def test_estimate_matches_oracles(scope):
    rng = np.random.default_rng(2)
    s = random_state(rng, 30, 6, 2, A=2, scope=scope)
    for a in range(2):
        P = s.subspace(a).projector
        th = s.estimate(a)
        ref = normal_equations_oracle(s.Z(a), s.Y(a), P, s.cfg.rho)
        assert np.max(np.abs(th - ref)) <= 1e-8
        assert np.max(np.abs(th - oracle_ridge_in_subspace(s.Z(a), s.Y(a), P, s.cfg.rho))) <= 1e-8


def test_oracle_full_and_empty_projector():
    rng = np.random.default_rng(3)
    Z, Y = rng.standard_normal((12, 4)), rng.standard_normal(12)
    ridge = np.linalg.solve(Z.T @ Z + 0.5 * np.eye(4), Z.T @ Y)
    np.testing.assert_allclose(oracle_ridge_in_subspace(Z, Y, np.eye(4), 0.5), ridge, atol=1e-12)
    np.testing.assert_array_equal(oracle_ridge_in_subspace(Z, Y, np.zeros((4, 4)), 0.5), np.zeros(4))
    with pytest.raises(InvalidInputError):
        oracle_ridge_in_subspace(Z, Y, np.eye(4), 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["per_action", "global"]))
def test_subspace_containment(seed, scope):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 10))
    r = int(rng.integers(1, min(d, 3) + 1))
    s = random_state(rng, int(rng.integers(1, 50)), d, r, A=2, scope=scope)
    for a in range(2):
        if s.count(a):
            P = s.subspace(a).projector
            th = s.estimate(a)
            assert np.max(np.abs(P @ th - th)) <= 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rotation_equivariance(seed):
    rng = np.random.default_rng(seed)
    n, d, r = 40, 6, 2
    cfg = BoundConfig(d=d, r=r, slope_bound_L=1e6)
    Z = rng.standard_normal((n, r)) @ rng.standard_normal((r, d)) * 3 + 0.1 * rng.standard_normal((n, d))
    Y = rng.standard_normal(n)
    R, _ = np.linalg.qr(rng.standard_normal((d, d)))
    s1 = fill(PcrState(cfg), Z, [0] * n, Y)
    s2 = fill(PcrState(cfg), Z @ R.T, [0] * n, Y)
    np.testing.assert_allclose(s2.estimate(0), R @ s1.estimate(0), atol=1e-8)
    b1, b2 = s1.error_bound_value(0), s2.error_bound_value(0)
    assert b2 == pytest.approx(b1, rel=1e-9)


def test_clamp_to_L_ball():
    s = PcrState(BoundConfig(d=2, r=2, rho=1e-6, slope_bound_L=1.0))
    fill(s, np.eye(2), [0, 0], [30.0, 40.0])
    th = s.estimate(0)
    assert np.linalg.norm(th) == pytest.approx(1.0)
    np.testing.assert_allclose(th, [0.6, 0.8], atol=1e-9)
    assert s.clamp_events == 1
    assert np.linalg.norm(s.estimate(0, clamp=False)) > 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_clamped_norm_never_exceeds_L(seed):
    rng = np.random.default_rng(seed)
    s = random_state(rng, 20, 5, 2)
    s.cfg = s.cfg.with_(slope_bound_L=0.1)
    assert np.linalg.norm(s.estimate(0)) <= 0.1 * (1 + 1e-12)


# -- error bound -----------------------------------------------------------------
def synthetic_state(**cfg_kw):
    cfg = BoundConfig(**{**oracles.SYNTH, **cfg_kw})
    s = PcrState(cfg)
    Z = np.zeros((20, 5))
    Z[0, 0], Z[1, 1] = 10.0, 5.0
    return fill(s, Z, [0] * 20, np.zeros(20))


def test_bound_synthetic_state(monkeypatch):
    s = synthetic_state()
    monkeypatch.setattr(s, "U_n", lambda: 2.0)
    sm = s.summary(0)
    assert (sm.sigma_1, sm.sigma_r, sm.count) == (10.0, 5.0, 20)
    e = oracles.err(0.01, 1, 1, 1, 2, 0.05, 2, 5, 10, 20)
    expected = float(oracles.empirical_bound(1, 2.5, 2, 5, e))
    assert s.empirical_error_bound(0) == pytest.approx(expected, rel=1e-9)


def test_bound_vanishes_without_slope_or_noise(monkeypatch):
    s = synthetic_state(slope_bound_L=0.0, eta=0.0, alpha=0.0, rho=1e-12)
    monkeypatch.setattr(s, "U_n", lambda: 2.0)
    assert s.empirical_error_bound(0) == pytest.approx(0.0, abs=1e-9)


def test_bound_gate_returns_none(monkeypatch):
    s = synthetic_state()
    monkeypatch.setattr(s, "U_n", lambda: 5.0)  # snr = 1
    assert s.empirical_error_bound(0) is None
    assert s.error_bound_value(0) > 0


def test_bound_rank_deficient():
    s = PcrState(BoundConfig(d=3, r=2))
    fill(s, [[1.0, 0, 0]] * 4, [0] * 4, [1.0] * 4)
    assert s.empirical_error_bound(0) is None
    with pytest.raises(DegenerateRankError):
        s.empirical_error_bound(0, strict=True)
    with pytest.raises(DegenerateRankError):
        s.rate_diagnostic(0)


def test_bound_covers_error_in_simulation():
    rng = np.random.default_rng(7)
    prob = gen_regression_problem(8, 2, 2, scale=20, sigma=0.1, eta=0.1, rng=rng)
    s = PcrState(BoundConfig(d=8, r=2, num_actions_A=2))
    simulate(prob, s, 400, "random", rng)
    for a in range(2):
        b = s.empirical_error_bound(a)
        assert b is not None
        assert np.sum((s.estimate(a) - prob.thetas[a]) ** 2) <= b


# -- diagnostics -----------------------------------------------------------------
def test_rate_diagnostic_examples(monkeypatch):
    s = PcrState(BoundConfig(d=2, r=2, rho=1.0))
    fill(s, 4 * np.eye(2), [0, 0], [1.0, 1.0])
    monkeypatch.setattr(s, "U_n", lambda: 2.0)
    assert s.rate_diagnostic(0).snr_sq_inv_kappa_sq == pytest.approx(0.25)

    s = PcrState(BoundConfig(d=100, r=3, slope_bound_L=1.0))
    rng = np.random.default_rng(8)
    fill(s, rng.standard_normal((16, 100)), [0] * 16, rng.standard_normal(16))
    assert s.rate_diagnostic(0).simp_rate == pytest.approx(9 / 16)


def test_rate_diagnostic_balanced_regime():
    rng = np.random.default_rng(9)
    d, r = 200, 2
    prob = gen_regression_problem(d, r, 1, scale=3.0, sigma=0.1, eta=0.1, rng=rng)
    s = PcrState(BoundConfig(d=d, r=r, sigma=0.1, eta=0.1))
    simulate(prob, s, d, "round_robin", rng)
    diag = s.rate_diagnostic(0)
    assert diag.simp_rate / 10 <= diag.snr_sq_inv_kappa_sq <= 10 * diag.simp_rate


def test_snr_report_examples(monkeypatch):
    s = PcrState(BoundConfig(d=2, r=1))
    fill(s, [[10.0, 0.0]], [0], [1.0])
    monkeypatch.setattr(s, "U_n", lambda: 5.0)
    rep = s.snr_report(0)
    assert rep.empirical_snr == pytest.approx(2.0) and rep.true_snr is None
    assert rep.empirical_snr == pytest.approx(rep.sigma_r_Z / rep.U_n, rel=1e-12)

    z = PcrState(BoundConfig(d=2, r=1))
    fill(z, np.zeros((3, 2)), [0] * 3, [0.0] * 3)
    assert z.snr_report(0).empirical_snr == 0.0


def test_snr_bracket_monte_carlo():
    rng = np.random.default_rng(10)
    d, r, n, sigma = 10, 2, 100, 1.0
    cfg = BoundConfig(d=d, r=r, sigma=sigma, delta=0.05)
    prob = gen_regression_problem(d, r, 1, scale=40.0, sigma=sigma, rng=rng)
    held = eligible = 0
    for _ in range(200):
        X, E = draw_covariates(rng, prob, n)
        s = fill(PcrState(cfg), X + E, [0] * n, np.zeros(n))
        rep = s.snr_report(0, true_X=X)
        if rep.true_snr < 2:
            continue
        eligible += 1
        sx = np.linalg.svd(X, compute_uv=False)[r - 1]
        held += sx / 2 <= rep.sigma_r_Z <= 1.5 * sx
    assert eligible >= 190
    assert held >= (1 - 0.05) * eligible


# -- snapshot --------------------------------------------------------------------
@pytest.mark.parametrize("scope", ["per_action", "global"])
def test_snapshot_round_trip(scope, tmp_path):
    rng = np.random.default_rng(11)
    s = random_state(rng, 25, 4, 2, A=3, scope=scope)
    path = tmp_path / "state.csv"
    text = s.to_csv(path)
    assert text.splitlines()[0].startswith("# ")
    t = PcrState.from_csv(path)
    assert t.projector_scope == scope and t.cfg == s.cfg
    for a in range(3):
        np.testing.assert_array_equal(t.Z(a), s.Z(a))
        np.testing.assert_array_equal(t.rounds(a), s.rounds(a))
        np.testing.assert_array_equal(t.estimate(a), s.estimate(a))
    assert PcrState.from_csv(io.StringIO(text)).n == 25


def test_functional_wrappers_match_methods():
    from adaptive_pcr import pcr

    rng = np.random.default_rng(12)
    s = random_state(rng, 10, 3, 1)
    pcr.observe(s, [1.0, 2.0, 3.0], 0, 0.5)
    assert s.n == 11
    np.testing.assert_array_equal(pcr.estimate(s, 0), s.estimate(0))
    assert pcr.snr_report(s, 0) == s.snr_report(0)
    assert conc.noise_opnorm_bound_U(11, s.cfg) == s.U_n()
