import numpy as np
import pytest

from oracles import gbm_exact, implicit_factor, ou_tail_moments
from snse_galerkin.errors import BlowUpError, ConfigurationError, ContractError
from snse_galerkin.integrator import (IntegratorConfig, error_trajectory, scalar_strong_errors,
                                      simulate, simulate_coupled, simulate_coupled_batch, step,
                                      stopping_time, strong_order)
from snse_galerkin.noise import NoiseKind, NoiseModel, sample_increments


def _e(i, n):
    c = np.zeros(n)
    c[i] = 1.0
    return c


def test_config_validation():
    with pytest.raises(ConfigurationError):
        IntegratorConfig(nu=0.0, dt=0.1, T=1.0)
    with pytest.raises(ConfigurationError):
        IntegratorConfig(nu=1.0, dt=2.0, T=1.0)
    assert IntegratorConfig(nu=1.0, dt=0.1, T=1.0).steps == 10


def test_single_step_implicit_factor(torus_ws):
    cfg = IntegratorConfig(nu=0.2, dt=0.01, T=1.0, nonlinear=False)
    out = step(_e(0, 32), np.zeros(32), np.zeros(1), None, cfg, torus_ws)
    assert out[0] == pytest.approx(implicit_factor(0.2, 1.0, 0.01), rel=1e-15)


def test_linear_fixed_point(torus_ws):
    nu = 0.3
    f = np.linspace(0.1, 1.0, 32)
    fixed = f / (nu * torus_ws.eigenvalues)
    cfg = IntegratorConfig(nu=nu, dt=0.01, T=1.0, nonlinear=False)
    np.testing.assert_allclose(step(fixed, f, np.zeros(1), None, cfg, torus_ws), fixed, rtol=1e-13)


def test_step_keeps_tail_zero_and_flags_overflow(torus_ws):
    cfg = IntegratorConfig(nu=0.2, dt=0.01, T=1.0)
    out = step(np.ones(32), np.zeros(32), np.zeros(1), None, cfg, torus_ws, n=10)
    assert np.all(out[10:] == 0)
    with pytest.raises(BlowUpError):
        step(np.full(32, 1e300), np.zeros(32), np.zeros(1), None, cfg, torus_ws)


def test_energy_decrement_first_order_in_dt(torus_ws):
    rng = np.random.default_rng(0)
    u = rng.standard_normal(32) * 0.3
    nu = 0.1
    lam = torus_ws.eigenvalues
    defects = []
    for dt in (1e-3, 5e-4):
        cfg = IntegratorConfig(nu=nu, dt=dt, T=1.0)
        new = step(u, np.zeros(32), np.zeros(1), None, cfg, torus_ws)
        decrement = 0.5 * (np.sum(u * u) - np.sum(new * new))
        defects.append(abs(decrement - nu * np.sum(lam * u * u) * dt))
    # defect of the discrete energy balance is O(dt^2) per step
    assert defects[1] <= 0.3 * defects[0]


def test_zero_data_gives_zero_record(torus_ws):
    cfg = IntegratorConfig(nu=0.1, dt=0.01, T=0.5)
    rec = simulate(np.zeros(32), np.zeros(32), None, cfg, torus_ws, 32)
    assert np.all(rec.h_sq == 0) and np.all(rec.v_sq == 0) and np.all(rec.dissipation == 0)


def test_linear_single_mode_decay(torus_ws):
    nu, dt, T = 0.5, 1e-3, 1.0
    cfg = IntegratorConfig(nu=nu, dt=dt, T=T, nonlinear=False)
    rec = simulate(2 * _e(0, 32), np.zeros(32), None, cfg, torus_ws, 32)
    lam1 = 1.0
    discrete = lam1 * 4 * implicit_factor(nu, lam1, dt) ** (2 * cfg.steps)
    assert rec.v_sq[-1] == pytest.approx(discrete, rel=1e-12)
    continuum = lam1 * 4 * np.exp(-2 * nu * lam1 * T)
    assert abs(rec.v_sq[-1] - continuum) / continuum <= 2 * nu * lam1 * dt


def test_simulate_deterministic(square_ws):
    model = NoiseModel(NoiseKind.DIAGONAL_LINEAR, [0.3, 0.2])
    cfg = IntegratorConfig(nu=0.1, dt=1e-3, T=0.1, record_coeffs=True)
    u0 = 0.1 * np.ones(square_ws.dim)
    a = simulate(u0, np.zeros(square_ws.dim), model, cfg, square_ws, 8, seed=3, stream=2)
    b = simulate(u0, np.zeros(square_ws.dim), model, cfg, square_ws, 8, seed=3, stream=2)
    np.testing.assert_array_equal(a.coeffs, b.coeffs)
    np.testing.assert_array_equal(a.v_sq, b.v_sq)


def test_blowup_is_flagged_not_propagated(torus_ws):
    cfg = IntegratorConfig(nu=1e-3, dt=0.03, T=3.0)
    rec = simulate(1e5 * np.ones(32), np.zeros(32), None, cfg, torus_ws, 32)
    assert rec.blew_up
    assert np.all(np.isfinite(rec.v_sq)) and len(rec) == rec.blowup_step
    assert "blow-up" in rec.diagnostic


def test_resolution_guard(torus_ws):
    cfg = IntegratorConfig(nu=0.1, dt=0.5, T=1.0)
    with pytest.raises(ConfigurationError):
        simulate(np.zeros(32), np.zeros(32), None, cfg, torus_ws, 32)


def test_coupled_single_level_equals_simulate(square_ws):
    model = NoiseModel(NoiseKind.DIAGONAL_LINEAR, [0.3, 0.2])
    cfg = IntegratorConfig(nu=0.1, dt=1e-3, T=0.05)
    u0 = 0.2 * np.ones(8)
    rec = simulate(u0, np.zeros(8), model, cfg, square_ws, 8, seed=1, stream=0)
    run = simulate_coupled(u0, np.zeros(8), model, cfg, square_ws, [8], 8, seed=1, stream=0)
    np.testing.assert_array_equal(run.records[8].v_sq, rec.v_sq)
    assert np.all(run.error_v[8] == 0)


def test_linear_truncation_commutes(torus_ws):
    model = NoiseModel(NoiseKind.ADDITIVE, [0.5, 0.4, 0.3])
    cfg = IntegratorConfig(nu=0.2, dt=0.01, T=0.5, nonlinear=False, record_coeffs=True)
    u0 = np.linspace(1, 0.1, 32)
    run = simulate_coupled(u0, np.zeros(32), model, cfg, torus_ws, [4, 12], 32, seed=2)
    ref = run.records[32].coeffs
    for n in (4, 12):
        np.testing.assert_allclose(run.records[n].coeffs, ref[:, :n], atol=1e-12)


def test_coupling_contract(torus_ws):
    model = NoiseModel(NoiseKind.ADDITIVE, [0.5] * 6)
    cfg = IntegratorConfig(nu=0.2, dt=0.01, T=0.1)
    with pytest.raises(ConfigurationError):
        simulate_coupled(np.zeros(32), np.zeros(32), model, cfg, torus_ws, [4, 12], 32)


def test_error_trajectory_identities(torus_ws):
    model = NoiseModel(NoiseKind.ADDITIVE, [0.5, 0.4])
    cfg = IntegratorConfig(nu=0.2, dt=0.01, T=0.3, nonlinear=False, record_coeffs=True)
    u0 = np.linspace(1, 0.1, 32)
    run = simulate_coupled(u0, np.zeros(32), model, cfg, torus_ws, [4, 8, 16], 32, seed=5)
    lam = torus_ws.eigenvalues
    for n in (4, 8, 16):
        h, v = error_trajectory(run, n)
        assert v[0] == pytest.approx(np.sum(lam[n:] * u0[n:] ** 2), rel=1e-12)
        np.testing.assert_allclose(v, run.error_v[n], rtol=1e-12)
    h, v = error_trajectory(run, 32)
    assert np.all(v == 0)
    # linear diagonal case: error nonincreasing in n at every time
    assert np.all(run.error_v[4] >= run.error_v[8]) and np.all(run.error_v[8] >= run.error_v[16])
    plain = simulate_coupled(u0, np.zeros(32), model, IntegratorConfig(nu=0.2, dt=0.01, T=0.3),
                             torus_ws, [4], 32)
    with pytest.raises(ContractError):
        error_trajectory(plain, 4)


def test_linear_tail_second_moments_match_oracle(torus_ws):
    # driven tail through the projected-noise option: closed-form OU moments
    nu, dt, T = 0.5, 0.01, 0.5
    sig = np.full(32, 0.3)
    model = NoiseModel(NoiseKind.ADDITIVE, sig)
    cfg = IntegratorConfig(nu=nu, dt=dt, T=T, nonlinear=False)
    u0 = np.linspace(0.5, 0.0, 32)
    runs = simulate_coupled_batch(u0, np.zeros(32), model, cfg, torus_ws, [8], 32, 0, range(2000),
                                  project_noise=True)
    lam = torus_ws.eigenvalues
    _, second = ou_tail_moments(u0[8:], 0.0, sig[8:], lam[8:], nu, dt, cfg.steps)
    want = np.sum(lam[8:] * second[-1])
    got = np.array([r.error_v[8][-1] for r in runs])
    assert abs(got.mean() - want) <= 3 * got.std(ddof=1) / np.sqrt(got.size)


def test_stopping_time_examples(torus_ws):
    cfg = IntegratorConfig(nu=0.1, dt=0.01, T=0.5)
    rec = simulate(0.1 * _e(0, 32), np.zeros(32), None, cfg, torus_ws, 32)
    assert stopping_time(rec, 0.0) == 0.0
    assert stopping_time(rec, 1e9) is None
    Ms = [0.005, 0.0101, 0.0102, 0.011]
    taus = [stopping_time(rec, M) for M in Ms]
    finite = [t for t in taus if t is not None]
    assert finite == sorted(finite)


def test_deterministic_limit_linear_in_sigma(square_ws):
    cfg = IntegratorConfig(nu=0.1, dt=1e-3, T=0.2)
    u0 = 0.3 * np.ones(8)
    f = np.zeros(8)
    base = simulate(u0, f, None, cfg, square_ws, 8)
    diffs = []
    for s0 in (1e-2, 1e-3):
        m = NoiseModel(NoiseKind.DIAGONAL_LINEAR, [s0, s0])
        rec = simulate(u0, f, m, cfg, square_ws, 8, seed=4)
        diffs.append(np.max(np.abs(rec.v_sq - base.v_sq)))
    assert diffs[1] == pytest.approx(diffs[0] / 10, rel=0.05)


def test_scalar_strong_order():
    dts = [2.0 ** -k for k in range(6, 11)]
    d, err = scalar_strong_errors(dts, n_paths=2000, seed=0)
    assert 0.35 <= strong_order(d, err) <= 0.65
    assert np.all(np.diff(err) > 0)


def test_scalar_errors_match_independent_scheme():
    # recompute the coarsest error from the raw increments and the exact solution
    n_paths, fine, coarse = 200, 2.0 ** -8, 2.0 ** -4
    d, err = scalar_strong_errors([fine, coarse], n_paths=n_paths, seed=6)
    r = int(coarse / fine)
    total = 0.0
    for i in range(n_paths):
        dw = sample_increments(1, int(1 / fine), fine, 6, i).increments[:, 0]
        u = 1.0
        for k in range(int(1 / coarse)):
            u = (u + u * dw[k * r:(k + 1) * r].sum()) / (1.0 + coarse)
        total += abs(u - gbm_exact(1.0, -1.0, 1.0, 1.0, dw.sum()))
    assert err[1] == pytest.approx(total / n_paths, rel=1e-10)
