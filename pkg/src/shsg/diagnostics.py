"""Comparison statistics between simulations and emulations."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._parallel import chunks, ordered_map
from .errors import InputError
from .grid_core import EnsembleField, ForcingSeries
from .spectral_model.covariance import axial_covariance_pairs
from .trend_fit import detrend_rescale, i_fit, mean_field

CELL_CHUNK = 256


# ------------------------------------------------------------ functional depth

def modified_band_depth(curves) -> np.ndarray:
    """Modified band depth (bands of two) of each curve.

    Parameters
    ----------
    curves : array_like, shape (n, T) or (C, n, T)

    Returns
    -------
    ndarray, shape (n,) or (C, n)
    """
    x = np.asarray(curves, dtype=np.float64)
    single = x.ndim == 2
    x = np.ascontiguousarray(x[None] if single else x)
    if x.shape[1] < 2:
        raise InputError("band depth needs at least two curves")
    d = kernels.mbd(x)
    return d[0] if single else d


def central_region_area(curves, depth: np.ndarray | None = None) -> np.ndarray:
    """Trapezoidal area between the envelopes of the deepest ceil(n/2) curves.

    Ties in depth go to the lower curve index.  Accepts (n, T) or (C, n, T).
    """
    x = np.asarray(curves, dtype=np.float64)
    single = x.ndim == 2
    x = x[None] if single else x
    C, n, T = x.shape
    if depth is None:
        depth = modified_band_depth(x)
    depth = np.atleast_2d(depth)
    k = -(-n // 2)
    order = np.argsort(-depth, axis=1, kind="stable")[:, :k]
    central = np.take_along_axis(x, order[:, :, None], axis=1)
    width = central.max(axis=1) - central.min(axis=1)
    area = np.trapezoid(width, axis=-1) if T > 1 else width[:, 0]
    return area[0] if single else area


def i_uq(simulations, emulations, threads: int = 1) -> np.ndarray:
    """CRA(emulations) / CRA(simulations) per cell.

    Inputs have shape (R, T, ...) and (R', T, ...); R, R' >= 4.
    """
    s = _data(simulations)
    e = _data(emulations)
    if s.shape[1:] != e.shape[1:]:
        raise InputError(f"shape mismatch: {s.shape[1:]} vs {e.shape[1:]}")
    if s.shape[0] < 4 or e.shape[0] < 4:
        raise InputError("I_uq needs at least four members on each side")
    cells = s.shape[2:]
    T = s.shape[1]
    S = np.moveaxis(s.reshape(s.shape[0], T, -1), 2, 0)       # (C, R, T)
    E = np.moveaxis(e.reshape(e.shape[0], T, -1), 2, 0)

    def part(sl):
        return (central_region_area(np.ascontiguousarray(S[sl])),
                central_region_area(np.ascontiguousarray(E[sl])))

    parts = ordered_map(part, chunks(S.shape[0], CELL_CHUNK), threads)
    den = np.concatenate([p[0] for p in parts])
    num = np.concatenate([p[1] for p in parts])
    if np.any(den == 0):
        raise InputError("simulation central region has zero area (identical curves)")
    return (num / den).reshape(cells)


# ------------------------------------------------------------ Wasserstein

def wasserstein_1d(a, b) -> float:
    """Order-1 Wasserstein distance between two empirical distributions."""
    return float(wasserstein_batch(np.asarray(a, dtype=np.float64).ravel()[:, None],
                                   np.asarray(b, dtype=np.float64).ravel()[:, None])[0])


def wasserstein_batch(A, B) -> np.ndarray:
    """Distances column by column; A is (n, C) and B is (m, C).

    Integrates |F_A^{-1}(p) - F_B^{-1}(p)| exactly over the merged
    breakpoints {i/n} and {j/m}.
    """
    A = np.sort(np.asarray(A, dtype=np.float64), axis=0)
    B = np.sort(np.asarray(B, dtype=np.float64), axis=0)
    n, m = A.shape[0], B.shape[0]
    if n == 0 or m == 0:
        raise InputError("Wasserstein distance of an empty sample")
    if n == m:
        return np.mean(np.abs(A - B), axis=0)
    # integer breakpoints on the common grid k / (n m)
    cuts = np.union1d(np.arange(1, n + 1) * m, np.arange(1, m + 1) * n)
    lo = np.concatenate([[0], cuts[:-1]])
    w = (cuts - lo) / (n * m)
    ia = lo // m
    ib = lo // n
    return np.sum(w[:, None] * np.abs(A[ia] - B[ib]), axis=0)


def wd_maps(simulations, emulations) -> tuple[np.ndarray, np.ndarray]:
    """WD_S per cell (pooled over t and members) and WD_T per step (pooled over cells and members)."""
    s = _data(simulations)
    e = _data(emulations)
    if s.shape[1:] != e.shape[1:]:
        raise InputError(f"shape mismatch: {s.shape[1:]} vs {e.shape[1:]}")
    R, T = s.shape[:2]
    Rp = e.shape[0]
    cells = s.shape[2:]
    wd_s = wasserstein_batch(s.reshape(R * T, -1), e.reshape(Rp * T, -1)).reshape(cells)
    st = np.moveaxis(s, 1, 0).reshape(T, -1).T
    et = np.moveaxis(e, 1, 0).reshape(T, -1).T
    wd_t = wasserstein_batch(st, et)
    return wd_s, wd_t


# ------------------------------------------------------------ spatial structure

def longitudinal_periodogram(Z, lat_index: int) -> np.ndarray:
    """|sum_j exp(-2 pi i c j / J) cov{Z(L, l_1), Z(L, l_{j+1})}| for c = 0..J-1.

    ``Z`` has shape (..., I, J); leading axes are pooled as samples.
    """
    z = np.asarray(Z, dtype=np.float64)
    I, J = z.shape[-2:]
    if not 0 <= lat_index < I:
        raise InputError("latitude index out of range")
    row = z[..., lat_index, :].reshape(-1, J)
    if row.shape[0] < 2:
        raise InputError("periodogram needs at least two samples")
    row = row - row.mean(axis=0)
    cov = row[:, 0] @ row / (row.shape[0] - 1)
    return np.abs(np.fft.fft(cov))


def periodograms(Z) -> np.ndarray:
    """Periodogram at every latitude, shape (I, J)."""
    z = np.asarray(Z, dtype=np.float64)
    return np.array([longitudinal_periodogram(z, i) for i in range(z.shape[-2])])


def moments(sample) -> tuple[float, float]:
    """Skewness and (non-excess) kurtosis."""
    x = np.asarray(sample, dtype=np.float64).ravel()
    if x.size < 4:
        raise InputError("moments need at least four values")
    sk, ku = moment_maps(x[:, None])
    return float(sk[0]), float(ku[0])


def moment_maps(data) -> tuple[np.ndarray, np.ndarray]:
    """Skewness and kurtosis along axis 0 for each remaining index."""
    x = np.asarray(data, dtype=np.float64)
    d = x - x.mean(axis=0)
    m2 = np.mean(d * d, axis=0)
    scale = np.maximum(np.abs(x).max(axis=0), 1e-300)
    if np.any(m2 <= (1e-14 * scale) ** 2):
        raise InputError("moments of a constant sample")
    return np.mean(d ** 3, axis=0) / m2 ** 1.5, np.mean(d ** 4, axis=0) / m2 ** 2


def autocov_by_latitude(Z, lat_index: int, lag: int = 1, bundle=None) -> tuple[np.ndarray, np.ndarray | None]:
    """Empirical cov{Z(L, l_j), Z(L, l_{j+lag})} for every j, and the model value.

    Parameters
    ----------
    Z : array_like, shape (..., I, J)
    lat_index, lag : int
    bundle : GeneratorBundle, optional
        Supplies the model overlay (axial covariance plus nugget, with each
        cell truncated at its own band limit).
    """
    z = np.asarray(Z, dtype=np.float64)
    I, J = z.shape[-2:]
    if not 0 <= lag < J:
        raise InputError(f"lag must lie in [0, {J})")
    row = z[..., lat_index, :].reshape(-1, J)
    row = row - row.mean(axis=0)
    emp = np.mean(row * np.roll(row, -lag, axis=1), axis=0)
    if bundle is None:
        return emp, None
    j = np.arange(J)
    a = np.column_stack([np.full(J, lat_index), j])
    b = np.column_stack([np.full(J, lat_index), (j + lag) % J])
    land = bundle.mask.mask[lat_index]
    Qa = np.where(land, bundle.Q_l, bundle.Q_o)
    Qb = np.where(land[(j + lag) % J], bundle.Q_l, bundle.Q_o)
    model = axial_covariance_pairs(bundle.axial, bundle.grid, a, b, Qa, Qb, bundle.nugget)
    return emp, model


# ------------------------------------------------------------ report

def _data(x) -> np.ndarray:
    if isinstance(x, EnsembleField):
        return x.data
    if hasattr(x, "data"):
        return np.asarray(x.data, dtype=np.float64)
    return np.asarray(x, dtype=np.float64)


@dataclass
class DiagnosticsReport:
    """All comparison statistics for one simulation/emulation pair."""

    i_uq: np.ndarray
    wd_s: np.ndarray
    wd_s_std: np.ndarray
    wd_t: np.ndarray
    periodogram_sim: np.ndarray
    periodogram_emu: np.ndarray
    skew_sim: np.ndarray
    kurt_sim: np.ndarray
    skew_emu: np.ndarray
    kurt_emu: np.ndarray
    i_fit: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {"median_i_uq": float(np.median(self.i_uq)),
               "median_wd_s": float(np.median(self.wd_s)),
               "median_wd_s_standardized": float(np.median(self.wd_s_std)),
               "median_wd_t": float(np.median(self.wd_t))}
        if self.i_fit is not None:
            out["median_i_fit"] = float(np.median(self.i_fit))
        out.update(self.extra)
        return out

    def write(self, path: str | os.PathLike) -> None:
        """One long-format CSV per statistic plus ``summary.json``."""
        os.makedirs(path, exist_ok=True)
        I, J = self.i_uq.shape
        maps = {"i_uq": self.i_uq, "wd_s": self.wd_s, "wd_s_standardized": self.wd_s_std}
        if self.i_fit is not None:
            maps["i_fit"] = self.i_fit
        for name, arr in maps.items():
            _write_rows(os.path.join(path, f"{name}.csv"), ["i", "j", "value"],
                        ([i, j, arr[i, j]] for i in range(I) for j in range(J)))
        _write_rows(os.path.join(path, "wd_t.csv"), ["t", "value"],
                    ([t + 1, v] for t, v in enumerate(self.wd_t)))
        _write_rows(os.path.join(path, "periodogram.csv"), ["source", "i", "c", "value"],
                    ([src, i, c, arr[i, c]]
                     for src, arr in (("simulation", self.periodogram_sim),
                                      ("emulation", self.periodogram_emu))
                     for i in range(arr.shape[0]) for c in range(arr.shape[1])))
        _write_rows(os.path.join(path, "moments.csv"),
                    ["source", "i", "j", "skewness", "kurtosis"],
                    ([src, i, j, sk[i, j], ku[i, j]]
                     for src, sk, ku in (("simulation", self.skew_sim, self.kurt_sim),
                                         ("emulation", self.skew_emu, self.kurt_emu))
                     for i in range(I) for j in range(J)))
        with open(os.path.join(path, "summary.json"), "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def compute_diagnostics(simulations, emulations, bundle=None, forcing: ForcingSeries | None = None,
                        threads: int = 1) -> DiagnosticsReport:
    """Full report.

    With a bundle and forcing the distributional statistics (periodograms,
    moments) use the standardized field Z = (y - m_t) / sigma, WD_S is
    standardized by the bundle's sigma and I_fit uses the fitted mean.
    Otherwise ensemble anomalies (y minus the member mean) are used and
    WD_S is standardized by the pooled simulation standard deviation.
    """
    s = _data(simulations)
    e = _data(emulations)
    if s.ndim != 4 or e.ndim != 4 or s.shape[1:] != e.shape[1:]:
        raise InputError(f"grid or length mismatch: {s.shape[1:]} vs {e.shape[1:]}")
    iuq = i_uq(s, e, threads)
    wd_s, wd_t = wd_maps(s, e)
    ifit = None
    if bundle is not None and forcing is not None:
        if bundle.grid.shape != s.shape[2:]:
            raise InputError("bundle grid does not match the fields")
        zs = detrend_rescale(s, bundle.trend, forcing)
        ze = detrend_rescale(e, bundle.trend, forcing)
        scale = bundle.trend.sigma
        ifit = i_fit(s, mean_field(bundle.trend, forcing, s.shape[1]))
    else:
        zs = s - s.mean(axis=0)
        ze = e - e.mean(axis=0)
        scale = np.sqrt(np.mean(zs * zs, axis=(0, 1)))
    with np.errstate(divide="ignore", invalid="ignore"):
        wd_std = np.where(scale > 0, wd_s / scale, np.inf)
    ss, ks = moment_maps(zs.reshape(-1, *zs.shape[2:]))
    se, ke = moment_maps(ze.reshape(-1, *ze.shape[2:]))
    return DiagnosticsReport(i_uq=iuq, wd_s=wd_s, wd_s_std=wd_std, wd_t=wd_t,
                             periodogram_sim=periodograms(zs), periodogram_emu=periodograms(ze),
                             skew_sim=ss, kurt_sim=ks, skew_emu=se, kurt_emu=ke, i_fit=ifit)
