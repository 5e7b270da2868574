import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import wasserstein_distance

from shsg import kernels
from shsg.diagnostics import (autocov_by_latitude, central_region_area, compute_diagnostics, i_uq,
                              longitudinal_periodogram, modified_band_depth, moments,
                              wasserstein_1d, wasserstein_batch, wd_maps)
from shsg.errors import InputError
from shsg.generator import synthetic_bundle
from shsg.grid_core import GridSpec, LandMask


def mbd_bruteforce(x):
    n, T = x.shape
    out = np.zeros(n)
    pairs = 0
    for a in range(n):
        for b in range(a + 1, n):
            lo = np.minimum(x[a], x[b])
            hi = np.maximum(x[a], x[b])
            out += ((x >= lo) & (x <= hi)).mean(axis=1)
            pairs += 1
    return out / pairs


def test_mbd_matches_bruteforce(rng):
    x = rng.standard_normal((9, 15))
    x[3] = x[5]                     # ties
    assert np.allclose(modified_band_depth(x), mbd_bruteforce(x), atol=1e-14)


def test_mbd_flavours_agree(rng):
    x = np.round(rng.standard_normal((4, 7, 12)), 1)
    assert np.allclose(kernels._mbd_jit(x), kernels._mbd_np(x), atol=1e-14)


def test_i_uq_identity(rng):
    x = rng.standard_normal((7, 20, 3, 2))
    assert np.array_equal(i_uq(x, x), np.ones((3, 2)))


def test_i_uq_envelope_scaling(rng):
    x = rng.standard_normal((7, 20, 3, 2))
    med = np.median(x, axis=0)
    assert np.allclose(i_uq(x, med + 2 * (x - med)), 2.0, rtol=0.05)


def test_i_uq_zero_denominator():
    x = np.ones((5, 10, 2, 2))
    with pytest.raises(InputError):
        i_uq(x, x)


def test_central_region_affine(rng):
    x = rng.standard_normal((8, 30))
    assert central_region_area(3 * x + 1) == pytest.approx(3 * central_region_area(x))


def test_wasserstein_trivial():
    a = np.array([0.3, -1.0, 2.5, 4.0])
    assert wasserstein_1d(a, a) == 0
    assert wasserstein_1d(a, a + 1.7) == pytest.approx(1.7)
    assert wasserstein_1d([1, 2, 3], [2, 3, 5]) == pytest.approx(4 / 3)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=30),
       st.lists(st.floats(-100, 100), min_size=1, max_size=30))
def test_wasserstein_matches_scipy(a, b):
    assert wasserstein_1d(a, b) == pytest.approx(wasserstein_distance(a, b), abs=1e-9)


def test_wd_maps_cases(rng):
    s = rng.standard_normal((3, 5, 4, 4))
    ws, wt = wd_maps(s, s)
    assert np.all(ws == 0) and np.all(wt == 0)
    ws, wt = wd_maps(s, s + 1)
    assert np.allclose(ws, 1) and np.allclose(wt, 1)
    e = rng.standard_normal((2, 5, 4, 4))
    ws, wt = wd_maps(s, e)
    for i in range(4):
        for j in range(4):
            assert ws[i, j] == pytest.approx(wasserstein_1d(s[:, :, i, j], e[:, :, i, j]), abs=1e-12)
    for t in range(5):
        assert wt[t] == pytest.approx(wasserstein_1d(s[:, t], e[:, t]), abs=1e-12)


def test_wasserstein_batch_unequal(rng):
    A = rng.standard_normal((13, 4))
    B = rng.standard_normal((7, 4))
    ref = [wasserstein_distance(A[:, c], B[:, c]) for c in range(4)]
    assert np.allclose(wasserstein_batch(A, B), ref, atol=1e-12)


def test_periodogram_cases(rng):
    J = 32
    z = rng.standard_normal((4000, 1, J))
    p = longitudinal_periodogram(z, 0)
    assert np.all(np.abs(p - 1) < 0.25)
    zeta = rng.standard_normal((500, 1, 1))
    z = np.cos(2 * np.pi * 3 * np.arange(J) / J) * zeta
    p = longitudinal_periodogram(z, 0)
    assert set(np.argsort(p)[-2:]) == {3, J - 3}
    assert p[3] > 1e6 * np.delete(p, [3, J - 3]).max()
    assert np.array_equal(longitudinal_periodogram(np.zeros((5, 2, J)), 1), np.zeros(J))


def test_moment_cases(rng):
    assert moments(np.tile([-1.0, 1.0], 50))[0] == 0
    sk, ku = moments(rng.standard_normal(10_000))
    assert abs(sk) < 0.1 and abs(ku - 3) < 0.2
    with pytest.raises(InputError):
        moments(np.full(10, 2.5))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10), st.floats(-5, 5))
def test_moments_affine_invariant(seed, a, b):
    x = np.random.default_rng(seed).gamma(2.0, size=200)
    s1, k1 = moments(x)
    s2, k2 = moments(a * x + b)
    assert s2 == pytest.approx(s1, rel=1e-8) and k2 == pytest.approx(k1, rel=1e-8)


def test_autocov_iid(rng):
    z = rng.standard_normal((3000, 4, 16))
    e1, _ = autocov_by_latitude(z, 2, lag=1)
    e0, _ = autocov_by_latitude(z, 2, lag=0)
    assert np.all(np.abs(e1) < 0.1) and np.all(np.abs(e0 - 1) < 0.1)


def test_autocov_model_overlay():
    grid = GridSpec.equiangular(12, 24)
    b = synthetic_bundle(grid, 5, 5, mask=LandMask.all_ocean(grid))
    _, model = autocov_by_latitude(np.zeros((2, 12, 24)), 4, 1, bundle=b)
    assert np.allclose(model, model[0], atol=1e-12)
    mask = np.zeros(grid.shape, dtype=bool)
    mask[4, :12] = True
    b = synthetic_bundle(grid, 2, 5, mask=LandMask(mask))
    _, model = autocov_by_latitude(np.zeros((2, 12, 24)), 4, 1, bundle=b)
    assert abs(model[3] - model[15]) > 1e-3


def test_report_identical_inputs(tmp_path, rng):
    x = rng.standard_normal((5, 10, 4, 6))
    rep = compute_diagnostics(x, x)
    s = rep.summary()
    assert (s["median_i_uq"], s["median_wd_s"], s["median_wd_t"]) == (1.0, 0.0, 0.0)
    rep = compute_diagnostics(x, x + 0.5)
    assert rep.summary()["median_wd_s"] == pytest.approx(0.5)
    assert rep.summary()["median_wd_t"] == pytest.approx(0.5)
    rep.write(tmp_path / "d")
    names = set(os.listdir(tmp_path / "d"))
    assert {"i_uq.csv", "wd_s.csv", "wd_t.csv", "periodogram.csv", "moments.csv",
            "summary.json"} <= names


def test_report_with_bundle(fitted_synthetic):
    d = fitted_synthetic
    rep = compute_diagnostics(d["sims"].to_field(), d["sims"].to_field(), d["bundle"], d["forcing"])
    assert rep.i_fit is not None and 0.8 < np.median(rep.i_fit) < 1.2
    assert np.all(rep.wd_s_std == 0)
