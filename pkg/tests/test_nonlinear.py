import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from snse_galerkin.errors import ConfigurationError, ContractError
from snse_galerkin.nonlinear import (BilinearWorkspace, bilinear_b, grad_pairing, ladyzhenskaya_ratio,
                                     rhs_det, skew_pairing, skew_ratio)
from snse_galerkin.spectral import build_dirichlet_basis, build_periodic_basis

vec32 = st.lists(st.floats(-3, 3), min_size=32, max_size=32).map(np.array)
_TORUS_WS = BilinearWorkspace(build_periodic_basis(2 * np.pi, 32))


def _self_advection_fft(k, phase, L=2 * np.pi, npts=64):
    """(u . grad) u for u = k_perp sin|cos(2 pi k.x / L), FFT derivatives on a fine grid."""
    x = np.arange(npts) * L / npts
    X, Y = np.meshgrid(x, x, indexing="ij")
    arg = 2 * np.pi * (k[0] * X + k[1] * Y) / L
    amp = np.sin(arg) if phase == 0 else np.cos(arg)
    kp = np.array([-k[1], k[0]]) / np.hypot(*k)
    u = kp[:, None, None] * amp
    freq = np.fft.fftfreq(npts, d=L / npts) * 2j * np.pi

    def d(f, axis):
        shape = [1, 1]
        shape[axis] = npts
        return np.real(np.fft.ifft2(np.fft.fft2(f) * freq.reshape(shape)))

    return np.stack([u[0] * d(c, 0) + u[1] * d(c, 1) for c in u])


def test_bilinear_zero_argument(torus_ws):
    v = np.random.default_rng(0).standard_normal(32)
    assert np.all(bilinear_b(np.zeros(32), v, torus_ws) == 0)
    assert skew_pairing(np.zeros(32), v, torus_ws) == 0
    assert grad_pairing(np.zeros(32), torus_ws) == 0


def test_single_mode_self_advection_vanishes(torus_ws):
    e1 = np.zeros(32)
    e1[0] = 1.0
    assert np.max(np.abs(bilinear_b(e1, e1, torus_ws))) <= 1e-10
    for k in [(0, 1), (1, 0), (1, 1), (2, -1)]:
        for phase in (0, 1):
            assert np.max(np.abs(_self_advection_fft(k, phase))) <= 1e-10


@given(vec32, vec32, vec32, st.floats(-2, 2))
def test_bilinearity(u, v, w, s):
    ws = _TORUS_WS
    lhs = bilinear_b(u + s * w, v, ws)
    rhs = bilinear_b(u, v, ws) + s * bilinear_b(w, v, ws)
    scale = 1 + np.max(np.abs(lhs))
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * scale
    lhs = bilinear_b(u, v + s * w, ws)
    rhs = bilinear_b(u, v, ws) + s * bilinear_b(u, w, ws)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * (1 + np.max(np.abs(lhs)))


@given(vec32, vec32)
def test_torus_skew_cancellation(u, v):
    if not (np.any(u) and np.any(v)):
        return
    lam = _TORUS_WS.eigenvalues
    bound = np.sqrt(np.sum(lam * u * u)) * np.sqrt(np.sum(lam * v * v)) * np.sqrt(np.sum(v * v))
    assert abs(skew_pairing(u, v, _TORUS_WS)) <= 1e-10 * bound


@given(vec32)
def test_torus_grad_cancellation(u):
    if not np.any(u):
        return
    assert ladyzhenskaya_ratio(u, _TORUS_WS) <= 1e-8


def test_dirichlet_skew_decays_under_refinement():
    # same smooth field on three grids; the quadrature defect must shrink at least like h
    ratios = []
    for n in (16, 32, 64):
        b = build_dirichlet_basis(1.0, n, 6)
        ws = BilinearWorkspace(b)
        u = np.array([1.0, 0.5, -0.3, 0.2, 0.1, -0.1])
        v = np.array([0.2, -0.4, 1.0, 0.3, -0.2, 0.5])
        ratios.append(float(skew_ratio(u, v, ws)))
    assert ratios[1] <= 0.6 * ratios[0]
    assert ratios[2] <= 0.6 * ratios[1]


def test_dirichlet_grad_pairing_nonzero(square_ws):
    u = np.array([1.0, 0.5, -0.3, 0.2, 0.1, -0.1, 0.05, 0.2])
    assert abs(grad_pairing(u, square_ws)) > 1e-3


def test_ladyzhenskaya_scale_invariance(square_ws):
    u = np.random.default_rng(5).standard_normal(square_ws.dim)
    assert ladyzhenskaya_ratio(2 * u, square_ws) == pytest.approx(ladyzhenskaya_ratio(u, square_ws), rel=1e-10)


def test_ladyzhenskaya_stable_under_sample_growth(square_ws):
    rng = np.random.default_rng(11)
    u = rng.standard_normal((1000, square_ws.dim)) * square_ws.eigenvalues ** -0.5
    r = ladyzhenskaya_ratio(u, square_ws)
    assert np.all(np.isfinite(r))
    assert r.max() <= 2 * r[:100].max()


def test_ladyzhenskaya_single_torus_mode_is_zero(torus_ws):
    e1 = np.zeros(32)
    e1[0] = 1.0
    assert ladyzhenskaya_ratio(e1, torus_ws) == 0.0
    with pytest.raises(ContractError):
        ladyzhenskaya_ratio(np.zeros(32), torus_ws)


def test_rhs_det_linear_part(torus_ws):
    e1 = np.zeros(32)
    e1[0] = 1.0
    out = rhs_det(e1, np.zeros(32), 0.3, torus_ws, nonlinear=False)
    assert out[0] == pytest.approx(-0.3 * torus_ws.eigenvalues[0])
    assert np.all(out[1:] == 0)
    assert np.all(rhs_det(np.zeros(32), np.zeros(32), 0.3, torus_ws) == 0)
    with pytest.raises(ConfigurationError):
        rhs_det(e1, np.zeros(32), 0.0, torus_ws)


@given(vec32)
def test_energy_identity_torus(u):
    nu = 0.7
    lam = _TORUS_WS.eigenvalues
    drift = rhs_det(u, np.zeros(32), nu, _TORUS_WS)
    v = np.sum(lam * u * u)
    assert abs(np.dot(drift, u) + nu * v) <= 1e-10 * (1 + v)


def test_energy_identity_square(square_ws):
    u = np.random.default_rng(2).standard_normal(square_ws.dim)
    nu = 0.1
    v = np.sum(square_ws.eigenvalues * u * u)
    drift = rhs_det(u, np.zeros(square_ws.dim), nu, square_ws)
    # only the quadrature defect of the skew term remains
    assert abs(np.dot(drift, u) + nu * v) <= 1e-2 * nu * v


def test_truncated_level_zeroes_tail(torus_ws):
    rng = np.random.default_rng(1)
    u, v = rng.standard_normal(32), rng.standard_normal(32)
    full = bilinear_b(u, v, torus_ws)
    part = bilinear_b(u, v, torus_ws, n=12)
    np.testing.assert_array_equal(part[:12], full[:12])
    assert np.all(part[12:] == 0)
