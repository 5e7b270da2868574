import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import simulate_tgh_ar
from shsg import kernels
from shsg.errors import InputError
from shsg.spectral_model import (PiecewiseInverse, TghParams, fit_ar, fit_tgh_ar, tgh_ar_loglik,
                                 tgh_derivative, tgh_forward, tgh_inverse)
from shsg.spectral_model.tgh import ar_to_pacf, pacf_to_ar, unit_ar_loglik


def test_tau_at_zero():
    for g in (-1.0, 0.0, 0.4):
        for h in (0.0, 0.3):
            assert tgh_forward(0.0, g, h) == 0.0


def test_tau_g_zero_limit():
    s = np.linspace(-3, 3, 13)
    assert np.allclose(tgh_forward(s, 0.0, 0.2), s * np.exp(0.1 * s * s), atol=1e-15, rtol=1e-15)
    # continuity at g -> 0
    assert np.allclose(tgh_forward(s, 1e-12, 0.2), tgh_forward(s, 0.0, 0.2), atol=1e-10)


def test_tau_closed_form():
    assert tgh_forward(1.0, 1.0, 0.0) == pytest.approx(math.e - 1, abs=1e-15)


def test_negative_h_rejected():
    with pytest.raises(InputError):
        tgh_forward(1.0, 0.1, -0.1)
    with pytest.raises(InputError):
        tgh_inverse(1.0, 0.1, -0.1)


def test_derivative_matches_finite_difference():
    s = np.linspace(-4, 4, 41)
    for g, h in ((0.3, 0.1), (-0.5, 0.0), (0.0, 0.4)):
        fd = (tgh_forward(s + 1e-6, g, h) - tgh_forward(s - 1e-6, g, h)) / 2e-6
        assert np.allclose(tgh_derivative(s, g, h), fd, rtol=1e-7, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(0, 0.5))
def test_tau_monotone_and_invertible(g, h):
    s = np.linspace(-4, 4, 401)
    y = tgh_forward(s, g, h)
    assert np.all(np.diff(y) > 0)
    back = tgh_inverse(y, g, h)
    assert np.max(np.abs(back - s)) < 1e-9


def test_inverse_composition_both_flavours():
    y = np.linspace(-6, 6, 1001)
    for g, h in ((0.2, 0.1), (-0.7, 0.25), (0.0, 0.0), (1.2, 0.0)):
        for inv in (kernels._tgh_inverse_jit, kernels._tgh_inverse_np):
            s = inv(y, g, h)
            ok = np.isfinite(s)
            assert np.allclose(tgh_forward(s[ok], g, h), y[ok], rtol=1e-9, atol=1e-12)


def test_inverse_out_of_range_is_infinite():
    # with h = 0 and g > 0, tau is bounded below by -1/g
    s = tgh_inverse(np.array([-3.0, 3.0]), 1.0, 0.0)
    assert s[0] == -np.inf and np.isfinite(s[1])


def test_piecewise_inverse_accuracy():
    inv = PiecewiseInverse(0.2, 0.1)
    y = np.linspace(-3, 3, 777)
    assert np.max(np.abs(inv(y) - tgh_inverse(y, 0.2, 0.1))) < 5e-3
    far = np.array([-200.0, 200.0])
    assert np.allclose(inv(far), tgh_inverse(far, 0.2, 0.1), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-0.95, 0.95), min_size=1, max_size=5))
def test_pacf_round_trip(kappa):
    k = np.array(kappa)
    phi, v = pacf_to_ar(k)
    assert np.allclose(ar_to_pacf(phi), k, atol=1e-9)
    assert 0 < v <= 1


def test_unit_ar_loglik_matches_dense_gaussian(rng):
    kappa = np.array([0.5, -0.2])
    phi, v = pacf_to_ar(kappa)
    T = 12
    # autocovariance of a unit-variance AR(2) by Yule-Walker
    acf = np.empty(T)
    acf[0] = 1.0
    acf[1] = phi[0] / (1 - phi[1])
    for k in range(2, T):
        acf[k] = phi[0] * acf[k - 1] + phi[1] * acf[k - 2]
    C = acf[np.abs(np.subtract.outer(np.arange(T), np.arange(T)))]
    s = rng.standard_normal((3, T))
    sign, logdet = np.linalg.slogdet(C)
    ref = sum(-0.5 * (T * np.log(2 * np.pi) + logdet + x @ np.linalg.solve(C, x)) for x in s)
    assert unit_ar_loglik(s, kappa) == pytest.approx(ref, rel=1e-10)


def test_identity_data_gives_identity_fit():
    y = simulate_tgh_ar(1.0, 0.0, 0.0, 0.5, 2000, 7, seed=3)
    fit = fit_tgh_ar(y, 1)
    assert abs(fit.g) < 0.05 and abs(fit.h) < 0.05
    assert abs(fit.phi[0] - fit_ar(y, 1).phi[0]) < 0.02
    assert fit.lam == pytest.approx(1.0, abs=0.05)


def test_identity_when_outside_sgh(rng):
    y = rng.standard_normal((3, 200))
    fit = fit_tgh_ar(y, 1, in_sgh=False)
    assert (fit.omega, fit.g, fit.h, fit.lam) == (1.0, 0.0, 0.0, 1.0)
    assert fit.phi[0] == fit_ar(y, 1).phi[0]
    assert np.array_equal(fit.latent, y)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_recovery(seed):
    truth = dict(omega=1.0, g=0.2, h=0.1, phi=0.5)
    y = simulate_tgh_ar(truth["omega"], truth["g"], truth["h"], truth["phi"], 2000, 7, seed)
    fit = fit_tgh_ar(y, 1)
    assert abs(fit.omega - 1.0) < 0.05
    assert abs(fit.g - 0.2) < 0.05
    assert abs(fit.h - 0.1) < 0.05
    assert abs(fit.phi[0] - 0.5) < 0.05
    assert fit.converged and not fit.fallback


def test_loglik_prefers_truth():
    y = simulate_tgh_ar(1.0, 0.3, 0.15, 0.4, 1500, 4, seed=9)
    kappa = np.array([0.4])
    best = tgh_ar_loglik(y, 1.0, 0.3, 0.15, kappa)
    for g, h in ((0.0, 0.0), (0.6, 0.15), (0.3, 0.4)):
        assert tgh_ar_loglik(y, 1.0, g, h, kappa) < best


def test_params_identity_contract():
    p = TghParams.identity(4)
    x = np.arange(8.0).reshape(2, 4)
    assert np.array_equal(p.forward(x), x) and np.array_equal(p.inverse(x), x)
    with pytest.raises(InputError):
        TghParams(np.ones(2), np.array([0.1, 0.0]), np.zeros(2), np.ones(2),
                  np.array([False, False]))


def test_params_forward_inverse(rng):
    p = TghParams(np.array([1.3, 1.0]), np.array([0.3, 0.0]), np.array([0.1, 0.0]),
                  np.array([0.9, 1.0]), np.array([True, False]))
    x = rng.standard_normal((50, 2))
    assert np.allclose(p.inverse(p.forward(x)), x, atol=1e-10)
