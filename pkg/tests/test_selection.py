import numpy as np
import pytest

from conftest import random_sym_coeffs, simulate_ar
from shsg.errors import InputError
from shsg.grid_core import LandMask
from shsg.generator import synthetic_mask
from shsg.sht import forward_sht, inverse_sht
from shsg.spectral_model import (cross_corr_check, estimate_nugget, gaussianity_test,
                                 jarque_bera, select_Q)


def band_limited(grid, Q, R, T, seed):
    c = random_sym_coeffs(Q, np.random.default_rng(seed), (R, T))
    return inverse_sht(c, grid)


def test_select_Q_band_limited(small_grid):
    Z = band_limited(small_grid, 8, 2, 5, seed=1)
    mask = LandMask.all_ocean(small_grid)
    Q, table = select_Q(Z, small_grid, mask, "ocean", [4, 8, 12, 16])
    assert Q == 8
    assert min((table[q], q) for q in (4, 8, 12, 16))[1] == 8


def test_select_Q_land_region(small_grid):
    Z = band_limited(small_grid, 8, 2, 5, seed=2)
    Q, _ = select_Q(Z, small_grid, synthetic_mask(small_grid), "land", [4, 8, 12, 16])
    assert Q == 8
    with pytest.raises(InputError):
        select_Q(Z, small_grid, LandMask.all_ocean(small_grid), "land", [4, 8])


def test_select_Q_penalty_increases(small_grid):
    n = small_grid.n_lat * small_grid.n_lon
    pen = [np.log(n) * q * q for q in (4, 8, 12, 16)]
    assert np.all(np.diff(pen) > 0)


def test_nugget_zero_when_band_limited(small_grid):
    Z = band_limited(small_grid, 6, 2, 3, seed=3)
    mask = synthetic_mask(small_grid)
    v = estimate_nugget(Z, forward_sht(Z, 8, small_grid), small_grid, mask, 6, 8).v
    assert v.max() < 1e-10


def test_nugget_noise_level(small_grid, rng):
    R, T = 5, 100
    Z = band_limited(small_grid, 8, R, T, seed=4) + 0.2 * rng.standard_normal((R, T, 24, 48))
    mask = synthetic_mask(small_grid)
    v = estimate_nugget(Z, forward_sht(Z, 8, small_grid), small_grid, mask, 8, 8).v
    assert 0.18 <= np.median(v) <= 0.22
    perm = rng.permutation(R)
    v2 = estimate_nugget(Z[perm], forward_sht(Z[perm], 8, small_grid), small_grid, mask, 8, 8).v
    assert np.allclose(v, v2, atol=1e-14)


def test_gaussianity_level():
    flags = [gaussianity_test(np.random.default_rng(s).standard_normal(2000)) for s in range(400)]
    assert 0.025 <= np.mean(flags) <= 0.075


def test_gaussianity_power():
    flags = [gaussianity_test(np.random.default_rng(s).standard_t(3, 2000)) for s in range(100)]
    assert np.mean(flags) >= 0.95


def test_gaussianity_contract():
    with pytest.raises(InputError):
        jarque_bera(np.ones(100))
    with pytest.raises(InputError):
        gaussianity_test(np.arange(100.0), alpha=1.5)


def test_cross_corr_independent():
    s = simulate_ar(0.5, 200, 7, 32, seed=5)
    frac = cross_corr_check(s)
    assert 0.03 <= frac <= 0.07


def test_cross_corr_sampled_pairs_deterministic():
    s = simulate_ar(0.5, 100, 3, 60, seed=6)
    assert cross_corr_check(s, seed=1) == cross_corr_check(s, seed=1)


def test_cross_corr_duplicates():
    # AR(1) residuals of an AR(2) series keep lag-1 dependence, so every
    # ordered pair of identical copies is flagged
    base = simulate_ar([0.5, 0.3], 400, 7, 1, seed=7)
    assert cross_corr_check(np.repeat(base, 6, axis=2)) == pytest.approx(1.0)


def test_cross_corr_lag_shifted_pair():
    x = simulate_ar(0.5, 401, 7, 1, seed=8)[..., 0]
    s = np.stack([x[:, 1:], x[:, :-1]], axis=-1)
    # exactly one of the two ordered pairs is the perfectly aligned one
    assert cross_corr_check(s) == pytest.approx(0.5)
