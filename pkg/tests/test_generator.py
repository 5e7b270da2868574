import dataclasses

import numpy as np
import pytest

from shsg.errors import InputError
from shsg.generator import (FitConfig, aggregate, fit_full, generate, latent_paths,
                            synthetic_bundle, synthetic_forcing)
from shsg.grid_core import EnsembleField, GridSpec, LandMask
from shsg.persistence import bundle_bytes, param_count
from shsg.sht import forward_sht
from shsg.spectral_model import (ArParams, AxialCov, NuggetField, axial_covariance_pairs,
                                 block_orders, build_innovation)
from shsg.trend_fit import detrend_rescale, mean_field


def zero_noise(bundle):
    Q = bundle.Q
    innov = build_innovation(Q, [np.zeros((Q - abs(m), Q - abs(m))) for m in block_orders(Q)])
    return dataclasses.replace(bundle, innovation=innov,
                               nugget=NuggetField(np.zeros(bundle.grid.shape)))


def test_zero_noise_reproduces_mean():
    grid = GridSpec.equiangular(8, 16)
    b = zero_noise(synthetic_bundle(grid, 4, 4))
    f = synthetic_forcing(30)
    emu = generate(b, f, 3, seed=5)
    m = mean_field(b.trend, f, 30)
    assert np.array_equal(emu.data, np.broadcast_to(m, emu.data.shape))


def test_same_seed_same_bytes():
    grid = GridSpec.equiangular(8, 16)
    b = synthetic_bundle(grid, 4, 3, P=2)
    f = synthetic_forcing(40)
    e1 = generate(b, f, 4, seed=7)
    e2 = generate(b, f, 4, seed=7, threads=4)
    assert e1.data.tobytes() == e2.data.tobytes()
    assert not np.array_equal(e1.data, generate(b, f, 4, seed=8).data)
    # members do not depend on how many are requested
    assert np.array_equal(generate(b, f, 2, seed=7).data, e1.data[:2])
    assert e1.provenance()["bundle_sha256"] == b.fingerprint()


def test_variance_matches_model():
    grid = GridSpec.equiangular(12, 24)
    b = synthetic_bundle(grid, 5, 5)
    Q = b.Q
    diag = [np.diag(np.diag(blk)) for blk in b.axial.blocks[0]]
    ax = AxialCov(Q, [diag])
    innov = build_innovation(Q, [ax.block(m) for m in block_orders(Q)])
    b = dataclasses.replace(b, axial=ax, innovation=innov, ar=ArParams(np.zeros((1, Q * Q))))
    f = synthetic_forcing(500)
    emu = generate(b, f, 10, seed=3)
    Z = detrend_rescale(emu.data, b.trend, f)
    cells = np.argwhere(np.ones(grid.shape, dtype=bool))
    model = axial_covariance_pairs(ax, grid, cells, cells, nugget=b.nugget).reshape(grid.shape)
    emp = Z.var(axis=(0, 1))
    assert np.all(np.abs(emp / model - 1) < 0.1)


def test_latent_warm_up_is_stationary():
    grid = GridSpec.equiangular(8, 16)
    b = synthetic_bundle(grid, 4, 4)
    s = np.stack([latent_paths(b, 200, r, seed=2) for r in range(30)])
    k0 = np.diag(b.axial.to_dense(0))
    # early and late steps share the stationary variance
    early = s[:, :5].var(axis=(0, 1)) / k0
    late = s[:, 100:].var(axis=(0, 1)) / k0
    assert 0.6 < np.median(early) < 1.4 and 0.8 < np.median(late) < 1.2


def test_tgh_members_are_skewed():
    grid = GridSpec.equiangular(12, 24)
    b = synthetic_bundle(grid, 4, 4, tgh=(0.8, 0.0), resolution="monthly", K=1)
    f = synthetic_forcing(20)
    emu = generate(b, f, 4, seed=1)
    Z = detrend_rescale(emu.data, b.trend, f)
    c0 = forward_sht(Z, 4, grid).values[..., 0].real.ravel()
    d = c0 - c0.mean()
    assert np.mean(d ** 3) / np.mean(d ** 2) ** 1.5 > 0.5


def test_generate_contract():
    grid = GridSpec.equiangular(8, 16)
    b = synthetic_bundle(grid, 4, 4)
    with pytest.raises(InputError):
        generate(b, synthetic_forcing(10), 2, seed=-1)
    with pytest.raises(InputError):
        generate(b, synthetic_forcing(10), 2, seed=1, T=11)
    with pytest.raises(InputError):
        generate(b, synthetic_forcing(10), 0, seed=1)


def test_aggregate(rng):
    y = rng.standard_normal((2, 36, 3, 4))
    f = EnsembleField(y, "monthly")
    assert np.array_equal(aggregate(f, 1).data, y)
    c = np.full((2, 24, 3, 4), 1.25)
    assert np.array_equal(aggregate(EnsembleField(c, "monthly"), 12).data, np.full((2, 2, 3, 4), 1.25))
    out = aggregate(f, 12)
    ref = np.empty((2, 3, 3, 4))
    for r in range(2):
        for k in range(3):
            ref[r, k] = sum(y[r, 12 * k + j] for j in range(12)) / 12
    assert out.resolution == "annual"
    assert np.abs(out.data - ref).max() < 1e-12
    with pytest.raises(InputError):
        aggregate(f, 5)


def test_fit_recovers_truth(fitted_synthetic):
    truth, fb, rep = (fitted_synthetic[k] for k in ("truth", "bundle", "report"))
    assert (rep.Q_l, rep.Q_o, rep.P, rep.K) == (8, 8, 1, 0)
    assert np.abs(fb.ar.phi - truth.ar.phi).max() < 0.1
    assert np.median(np.abs(fb.trend.sigma / truth.trend.sigma - 1)) < 0.1
    assert 0.15 < np.median(fb.nugget.v) < 0.25
    assert rep.nonstationary == 0


def test_fit_is_deterministic(fitted_synthetic):
    d = fitted_synthetic
    again, _ = fit_full(d["sims"].to_field(), d["truth"].grid, d["truth"].mask, d["forcing"],
                        FitConfig(Q_l=None, Q_o=None, P=None, threads=4))
    assert bundle_bytes(again) == bundle_bytes(d["bundle"])


def test_fit_param_accounting(fitted_synthetic):
    b = fitted_synthetic["bundle"]
    pc = param_count(b)
    IJ = b.grid.n_lat * b.grid.n_lon
    Q = b.Q
    assert pc["deterministic"] == 5 * IJ and pc["nugget"] == IJ
    assert pc["ar"] == Q * Q and pc["covariance"] == Q * (Q + 1) * (Q + 2) // 6
    assert pc["total"] <= pc["bound"]


def test_fixed_band_limits_skip_selection(fitted_synthetic):
    d = fitted_synthetic
    _, rep = fit_full(d["sims"].to_field(), d["truth"].grid, d["truth"].mask, d["forcing"],
                      FitConfig(Q_l=6, Q_o=8))
    assert rep.selection["Q_l"] == "fixed" and rep.selection["Q_o"] == "fixed"
    assert (rep.Q_l, rep.Q_o) == (6, 8)


def test_fit_contract(fitted_synthetic):
    d = fitted_synthetic
    y = d["sims"].to_field()
    with pytest.raises(InputError):
        fit_full(EnsembleField(y.data[:1]), d["truth"].grid, d["truth"].mask, d["forcing"])
    with pytest.raises(InputError):
        fit_full(y, d["truth"].grid, LandMask(np.zeros((3, 3))), d["forcing"])
    with pytest.raises(InputError):
        fit_full(y, d["truth"].grid, d["truth"].mask, d["forcing"], FitConfig(Q_l=40, Q_o=8))
