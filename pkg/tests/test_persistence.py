import dataclasses

import numpy as np
import pytest

from shsg.errors import InputError
from shsg.generator import synthetic_bundle
from shsg.grid_core import GridSpec
from shsg.persistence import bundle_bytes, load_bundle, param_count, read_header, save_bundle


def test_round_trip_fitted(tmp_path, fitted_synthetic):
    b = fitted_synthetic["bundle"]
    digest = save_bundle(b, tmp_path / "b.shsg")
    back = load_bundle(tmp_path / "b.shsg")
    assert bundle_bytes(back) == bundle_bytes(b)
    assert np.array_equal(back.ar.phi, b.ar.phi)
    assert np.array_equal(back.innovation.to_dense(), b.innovation.to_dense())
    for d in range(b.axial.n_lags):
        assert np.array_equal(back.axial.to_dense(d), b.axial.to_dense(d))
    assert np.array_equal(back.trend.sigma, b.trend.sigma)
    assert len(digest) == 64


def test_round_trip_with_lags_and_tgh(tmp_path):
    grid = GridSpec.equiangular(8, 16)
    b = synthetic_bundle(grid, 3, 4, K=2, P=3, resolution="monthly", tgh=(0.3, 0.1))
    b.start_year = 1850
    save_bundle(b, tmp_path / "b.shsg")
    back = load_bundle(tmp_path / "b.shsg")
    assert bundle_bytes(back) == bundle_bytes(b)
    assert back.start_year == 1850 and back.P == 3 and back.K == 2
    assert np.array_equal(back.tgh.in_sgh, b.tgh.in_sgh)


def test_flipped_byte(tmp_path):
    b = synthetic_bundle(GridSpec.equiangular(6, 12), 3, 3)
    save_bundle(b, tmp_path / "b.shsg")
    raw = bytearray((tmp_path / "b.shsg").read_bytes())
    raw[-20] ^= 0x01
    (tmp_path / "b.shsg").write_bytes(bytes(raw))
    with pytest.raises(InputError, match="hash mismatch"):
        load_bundle(tmp_path / "b.shsg")


def test_old_version(tmp_path):
    b = synthetic_bundle(GridSpec.equiangular(6, 12), 3, 3)
    raw = bundle_bytes(b)
    (tmp_path / "b.shsg").write_bytes(b"SHSG0" + raw[5:])
    with pytest.raises(InputError, match="version"):
        load_bundle(tmp_path / "b.shsg")


def test_truncated_and_trailing(tmp_path):
    raw = bundle_bytes(synthetic_bundle(GridSpec.equiangular(6, 12), 3, 3))
    (tmp_path / "t.shsg").write_bytes(raw[:-8])
    with pytest.raises(InputError, match="truncated"):
        load_bundle(tmp_path / "t.shsg")
    (tmp_path / "t.shsg").write_bytes(raw + b"\0")
    with pytest.raises(InputError, match="trailing"):
        load_bundle(tmp_path / "t.shsg")
    with pytest.raises(InputError, match="truncated"):
        read_header(raw[:10])


def test_sections_are_aligned():
    raw = bundle_bytes(synthetic_bundle(GridSpec.equiangular(6, 12), 3, 3))
    header, off = read_header(raw)
    assert off % 64 == 0
    assert all(e["offset"] % 64 == 0 for e in header["sections"])
    assert header["payload_nbytes"] == len(raw) - off


def test_param_count_example():
    b = synthetic_bundle(GridSpec.equiangular(4, 8), 2, 2)
    pc = param_count(b)
    assert (pc["deterministic"], pc["nugget"], pc["tgh"], pc["ar"], pc["covariance"]) == (160, 32, 0, 4, 4)
    assert pc["total"] == 200
    assert pc["total"] <= pc["bound"]


def test_param_count_harmonics():
    grid = GridSpec.equiangular(4, 8)
    a = param_count(synthetic_bundle(grid, 2, 2, K=0, resolution="monthly"))
    b = param_count(synthetic_bundle(grid, 2, 2, K=3, resolution="monthly"))
    assert b["deterministic"] - a["deterministic"] == 6 * 32


def test_param_count_far_below_data_size(fitted_synthetic):
    b = fitted_synthetic["bundle"]
    R, T = fitted_synthetic["sims"].data.shape[:2]
    I, J = b.grid.shape
    Q = b.Q
    pc = param_count(b)
    assert pc["total"] < I * J * R * T / 100
    # O(IJ + Q'^3) with modest constants
    assert pc["total"] <= 8 * (I * J + Q ** 3)


def test_bundle_validation():
    b = synthetic_bundle(GridSpec.equiangular(6, 12), 3, 3)
    with pytest.raises(InputError):
        dataclasses.replace(b, version="SHSG0")
    with pytest.raises(InputError):
        dataclasses.replace(b, Q_l=4)
