import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from mfglab.errors import DenseLimitExceeded, InvalidSpec, NonConvex
from mfglab.grid import TimeGrid
from mfglab.lq import (EquilibriumControlMap, LqSpec, cooperative_system, mfg_particle_system,
                       mfg_residual, nplayer_residual, price_impact_spec, solve_cooperative_lq,
                       solve_mkv_lq, solve_nplayer_lq, solve_nplayer_lq_dense,
                       solve_nplayer_lq_symmetric, solve_nplayer_social_lq)
from mfglab.lq.mkv import MfgDecoupling, state_variance
from mfglab.lq.nplayer import NPlayerDecoupling, assemble_symmetric, symmetric_terminal
from mfglab.tabular import dumps, loads


def _single_agent_riccati(spec: LqSpec, times):
    """Independent oracle: adjoint slope of the one-player problem, where
    every population mean equals the agent's own state or control."""
    Qe, Re = spec.Q + spec.Qbar, spec.R + spec.Rbar
    Ae, Be, Se = spec.A + spec.Abar, spec.B + spec.Bbar, spec.Sbar

    def rhs(t, P):
        return -2 * Qe - 2 * Ae * P + (Se + Be * P) ** 2 / (2 * Re)

    sol = solve_ivp(rhs, (spec.T, 0.0), [2 * (spec.QT + spec.QbarT)], t_eval=times[::-1],
                    rtol=1e-12, atol=1e-13, method="DOP853")
    return sol.y[0][::-1]


def test_mfg_riccati_closed_form():
    # eta' = eta^2 with eta(T) = 1 gives eta = 1 / (1 + T - t)
    spec = LqSpec(A=0, Abar=0, B=1, Bbar=0, Q=0, Qbar=0, R=0.5, Rbar=0, Sbar=0, QT=0.5, QbarT=0, T=1.0)
    grid = TimeGrid(1.0, 40)
    dec = solve_mkv_lq(spec, grid)
    np.testing.assert_allclose(dec.eta, 1 / (1 + grid.T - grid.times), atol=1e-10)


def test_mfg_means_follow_decoupling():
    spec = LqSpec()
    dec = solve_mkv_lq(spec, TimeGrid(spec.T, 50))
    assert dec.m[0] == pytest.approx(spec.mu0_mean)
    np.testing.assert_allclose(dec.n, dec.eta * dec.m + dec.psi, atol=1e-9)
    assert dec.n[-1] == pytest.approx(2 * spec.QT * dec.m[-1], abs=1e-12)


def test_state_variance_without_control_is_brownian():
    spec = LqSpec(A=0, Abar=0, Q=0, Qbar=0, QT=0, QbarT=0, Sbar=0, mu0_std=0.3, sigma=0.7)
    dec = solve_mkv_lq(spec, TimeGrid(spec.T, 20))
    np.testing.assert_allclose(state_variance(dec), 0.09 + 0.49 * dec.grid.times, rtol=1e-12)


def test_single_player_dense_matches_riccati_oracle():
    spec = LqSpec.random(np.random.default_rng(3))
    grid = TimeGrid(spec.T, 30)
    dec = solve_nplayer_lq(spec, 1, grid)
    assert dec.encoding == "dense"
    np.testing.assert_allclose(dec.P[:, 0, 0], _single_agent_riccati(spec, grid.times), rtol=1e-8)
    np.testing.assert_allclose(dec.q, 0.0, atol=1e-12)


def test_cooperative_single_player_matches_riccati_oracle():
    spec = LqSpec.random(np.random.default_rng(4))
    grid = TimeGrid(spec.T, 30)
    pr, _ = cooperative_system(spec).solve(grid)
    np.testing.assert_allclose(pr.sum(axis=1), _single_agent_riccati(spec, grid.times), rtol=1e-8)


@pytest.mark.parametrize("N", [2, 3, 5])
def test_dense_and_symmetric_agree(N):
    spec = LqSpec.random(np.random.default_rng(N))
    grid = TimeGrid(spec.T, 20)
    dense = solve_nplayer_lq_dense(spec, N, grid)
    sym = solve_nplayer_lq_symmetric(spec, N, grid)
    P, q = sym.dense()
    np.testing.assert_allclose(P, dense.P, atol=1e-8)
    np.testing.assert_allclose(q, dense.q, atol=1e-8)


def test_dense_is_permutation_equivariant():
    N = 4
    spec = LqSpec.random(np.random.default_rng(11))
    dec = solve_nplayer_lq_dense(spec, N, TimeGrid(spec.T, 10))
    P = dec.P[0].reshape(N, N, N)
    q = dec.q[0].reshape(N, N)
    perm = np.random.default_rng(0).permutation(N)
    np.testing.assert_allclose(P[np.ix_(perm, perm, perm)], P, atol=1e-12)
    np.testing.assert_allclose(q[np.ix_(perm, perm)], q, atol=1e-12)


def test_terminal_conditions():
    spec = LqSpec()
    N = 3
    grid = TimeGrid(spec.T, 10)
    sym = solve_nplayer_lq_symmetric(spec, N, grid)
    np.testing.assert_array_equal(sym.sym[-1], symmetric_terminal(spec, N))
    dense = solve_nplayer_lq_dense(spec, N, grid)
    P = dense.P[-1].reshape(N, N, N)
    expected = np.full((N, N, N), 2 * spec.QbarT / N**2)
    idx = np.arange(N)
    expected[idx, idx, idx] += 2 * spec.QT
    np.testing.assert_allclose(P, expected, atol=1e-15)


def test_assemble_symmetric_layout():
    sym = np.arange(1.0, 8.0)
    N = 3
    P, q = assemble_symmetric(sym, N)
    P = P.reshape(N, N, N)
    q = q.reshape(N, N)
    a, b, c, d, e, f, g = sym
    assert P[0, 0, 0] == pytest.approx(a + b / N)
    assert P[0, 0, 2] == pytest.approx(b / N)
    assert q[1, 1] == c
    assert P[0, 1, 0] == pytest.approx((d + f / N) / N)
    assert P[0, 1, 1] == pytest.approx((e + f / N) / N)
    assert P[0, 1, 2] == pytest.approx(f / N**2)
    assert q[0, 2] == pytest.approx(g / N)


def test_no_interaction_nash_equals_mfg():
    spec = LqSpec().without_interaction()
    grid = TimeGrid(spec.T, 40)
    mfg = solve_mkv_lq(spec, grid)
    nash = solve_nplayer_lq_symmetric(spec, 16, grid)
    np.testing.assert_allclose(nash.sym[:, 0], mfg.eta, atol=1e-9)
    np.testing.assert_allclose(nash.sym[:, 1:], 0.0, atol=1e-12)
    np.testing.assert_allclose(mfg.psi, 0.0, atol=1e-12)


def test_zero_costs_give_zero_adjoints():
    spec = LqSpec(Q=0, Qbar=0, QT=0, QbarT=0, Sbar=0)
    grid = TimeGrid(spec.T, 10)
    assert np.all(solve_nplayer_lq_symmetric(spec, 8, grid).sym == 0)
    mfg = solve_mkv_lq(spec, grid)
    assert np.all(mfg.eta == 0) and np.allclose(mfg.n, 0)


def test_price_impact_offdiagonal_adjoints_vanish():
    spec = price_impact_spec(0.5, 0.1, 0.5, 1.0, 1.0, 0.5, 0.25)
    assert (spec.R, spec.Sbar, spec.Q, spec.QT, spec.B) == (0.6, -0.5, 1.0, 1.0, 1.0)
    dec = solve_nplayer_lq_symmetric(spec, 10, TimeGrid(spec.T, 25))
    assert np.max(np.abs(dec.sym[:, 3:])) == 0.0


def test_price_impact_rejects_nonconvex():
    with pytest.raises(NonConvex):
        price_impact_spec(0.5, -0.6, 0.5, 1.0, 1.0, 0.5, 0.25)
    with pytest.raises(InvalidSpec):
        price_impact_spec(0.5, 0.0, 0.5, 0.0, 1.0, 0.5, 0.25)


def test_spec_validation():
    with pytest.raises(InvalidSpec):
        LqSpec(R=0)
    with pytest.raises(InvalidSpec):
        LqSpec(sigma=0)
    with pytest.raises(InvalidSpec):
        LqSpec.from_dict({"A": 1.0, "gamma": 2.0})
    with pytest.raises(InvalidSpec):
        LqSpec(R=1, Rbar=-2).check_nplayer(2)


def test_dense_limit():
    with pytest.raises(DenseLimitExceeded):
        solve_nplayer_lq_dense(LqSpec(), 65, TimeGrid(1.0, 2))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), N=st.integers(2, 12))
def test_nash_control_satisfies_first_order_condition(seed, N):
    rng = np.random.default_rng(seed)
    spec = LqSpec.random(rng)
    cmap = EquilibriumControlMap(spec, N)
    X = rng.normal(size=(3, N))
    Y = rng.normal(size=(3, N, N))
    alpha = cmap.nash(X, Y)
    assert np.max(np.abs(cmap.nash_foc_residual(X, Y, alpha))) < 1e-12
    Yi = rng.normal(size=(3, N))
    coop = cmap.cooperative(X, Yi)
    assert np.max(np.abs(cmap.cooperative_foc_residual(X, Yi, coop))) < 1e-12


def test_nash_remainder_vanishes_without_control_interaction():
    spec = LqSpec(Sbar=0, Bbar=0, Rbar=0)
    rng = np.random.default_rng(0)
    cmap = EquilibriumControlMap(spec, 5)
    X, Y = rng.normal(size=(2, 5)), rng.normal(size=(2, 5, 5))
    assert np.max(np.abs(cmap.nash_remainder(X, Y))) == 0.0
    assert np.max(np.abs(cmap.nash_mean_remainder(X, Y))) < 1e-15


def test_cooperative_coefficients_are_limit_of_social_solver():
    spec = LqSpec()
    grid = TimeGrid(spec.T, 20)
    coop = solve_cooperative_lq(spec, grid)
    social = solve_nplayer_social_lq(spec, 7, grid)
    np.testing.assert_array_equal(social.sym[:, 0], coop.eta)
    assert coop.n[-1] == pytest.approx(2 * (spec.QT + spec.QbarT) * coop.m[-1])


def test_particle_system_matches_mfg_decoupling():
    # with expectations replaced by means the MFG adjoint is p X + r m
    spec = LqSpec()
    grid = TimeGrid(spec.T, 40)
    system = mfg_particle_system(spec)
    pr, _ = system.solve(grid)
    m, n = system.mean_path(spec, grid)
    mfg = solve_mkv_lq(spec, grid)
    np.testing.assert_allclose(pr[:, 0], mfg.eta, atol=1e-9)
    np.testing.assert_allclose(pr[:, 1] * m, mfg.psi, atol=1e-8)
    np.testing.assert_allclose(n, mfg.n, atol=1e-8)


def test_residuals_scale_with_step_squared():
    spec = LqSpec()
    small = [mfg_residual(solve_mkv_lq(spec, TimeGrid(1.0, n)), n_paths=300).max_relative for n in (50, 100)]
    assert 3.0 < small[0] / small[1] < 5.0
    assert small[1] < 1e-6


@pytest.mark.parametrize("solver", ["symmetric", "dense", "social"])
def test_nplayer_residual_passes(solver):
    spec = LqSpec()
    grid = TimeGrid(1.0, 100)
    dec = {"symmetric": lambda: solve_nplayer_lq_symmetric(spec, 4, grid),
           "dense": lambda: solve_nplayer_lq_dense(spec, 4, grid),
           "social": lambda: solve_nplayer_social_lq(spec, 4, grid)}[solver]()
    assert nplayer_residual(dec, n_reps=200).passed


def test_residual_detects_perturbed_coefficients():
    spec = LqSpec()
    grid = TimeGrid(1.0, 100)
    dec = solve_nplayer_lq_symmetric(spec, 4, grid)
    bad = NPlayerDecoupling(spec, 4, grid, "symmetric", sym=dec.sym * (1 + 1e-3))
    assert not nplayer_residual(bad, n_reps=200).passed


def test_euler_scheme_is_first_order():
    spec = LqSpec()
    errs = []
    for n in (25, 50, 100):
        grid = TimeGrid(1.0, n)
        exact = solve_nplayer_lq_dense(spec, 3, grid)
        euler = solve_nplayer_lq_dense(spec, 3, grid, scheme="euler")
        errs.append(np.max(np.abs(euler.P - exact.P)))
    assert 1.8 < errs[0] / errs[1] < 2.2 and 1.8 < errs[1] / errs[2] < 2.2


def test_decoupling_table_round_trip():
    spec = LqSpec()
    grid = TimeGrid(spec.T, 8)
    mfg = solve_mkv_lq(spec, grid)
    back = MfgDecoupling.from_table(loads(dumps(mfg.to_table())))
    np.testing.assert_array_equal(back.eta, mfg.eta)
    np.testing.assert_array_equal(back.psi, mfg.psi)
    assert back.spec == spec
    for dec in (solve_nplayer_lq_symmetric(spec, 3, grid), solve_nplayer_lq_dense(spec, 2, grid)):
        again = NPlayerDecoupling.from_table(loads(dumps(dec.to_table())))
        np.testing.assert_array_equal(again.dense()[0], dec.dense()[0])
        assert again.encoding == dec.encoding
