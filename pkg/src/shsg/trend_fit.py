"""Deterministic trend and scale per grid cell.

The mean at step t (year y = ceil(t / period)) is

    beta0 + beta1 x_y + beta2 (1 - rho) sum_{s>=1} rho^{s-1} x_{y-s}
          + sum_k a_k cos(2 pi t k / period) + b_k sin(2 pi t k / period)

and the residual scale sigma is the pooled maximum-likelihood estimate. The
decay rho is found by maximising the profile objective
``-sum_r log RSS_r(rho)`` on a coarse grid followed by golden-section
refinement. All cells are fitted together with vectorised algebra: for fixed
rho only the lag column differs between cells, so it is partialled out of
the shared columns (intercept, forcing, harmonics).
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import kernels
from ._parallel import chunks, ordered_map
from .errors import InputError
from .grid_core import EnsembleField, ForcingSeries

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
CELL_CHUNK = 512


@dataclass(frozen=True)
class TrendParams:
    """Per-cell trend coefficients; cell arrays share one spatial shape."""

    beta0: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    rho: np.ndarray
    sigma: np.ndarray
    a: np.ndarray            # (K, *cells)
    b: np.ndarray            # (K, *cells)
    K: int = 0
    period: int = 1
    degenerate: np.ndarray = dc_field(default=None, compare=False)

    def __post_init__(self):
        arrs = {}
        for name in ("beta0", "beta1", "beta2", "rho", "sigma"):
            arrs[name] = np.asarray(getattr(self, name), dtype=np.float64)
        shape = arrs["beta0"].shape
        for name, v in arrs.items():
            if v.shape != shape:
                raise InputError(f"{name} has shape {v.shape}, expected {shape}")
            object.__setattr__(self, name, v)
        for name in ("a", "b"):
            v = np.asarray(getattr(self, name), dtype=np.float64).reshape((self.K,) + shape)
            object.__setattr__(self, name, v)
        if np.any((arrs["rho"] < 0) | (arrs["rho"] > 1)):
            raise InputError("rho must lie in [0, 1]")
        if np.any(arrs["sigma"] < 0):
            raise InputError("sigma must be non-negative")
        if self.K > 0 and 2 * self.K >= self.period:
            raise InputError(f"K={self.K} harmonics need period > {2 * self.K}")
        if self.degenerate is None:
            object.__setattr__(self, "degenerate", np.zeros(shape, dtype=bool))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.beta0.shape

    def coefficient_matrix(self) -> np.ndarray:
        """Rows ordered like :func:`build_design` columns, shape (3+2K, n_cells)."""
        rows = [self.beta0.ravel(), self.beta1.ravel(), self.beta2.ravel()]
        for k in range(self.K):
            rows += [self.a[k].ravel(), self.b[k].ravel()]
        return np.array(rows)

    @classmethod
    def zeros(cls, shape, K: int = 0, period: int = 1) -> "TrendParams":
        z = np.zeros(shape)
        return cls(z, z, z, z, np.ones(shape), np.zeros((K,) + tuple(shape)),
                   np.zeros((K,) + tuple(shape)), K, period)


# ------------------------------------------------------------ design

def _year_index(T: int, period: int) -> np.ndarray:
    """0-based year of each step t = 1..T."""
    return (np.arange(1, T + 1) - 1) // period


def harmonic_columns(T: int, K: int, period: int) -> np.ndarray:
    t = np.arange(1, T + 1, dtype=np.float64)
    cols = []
    for k in range(1, K + 1):
        ang = 2 * np.pi * t * k / period
        cols += [np.cos(ang), np.sin(ang)]
    return np.array(cols).T.reshape(T, 2 * K)


def lag_columns(forcing: ForcingSeries, rho, T: int, period: int) -> np.ndarray:
    """Lag regressor for each step and each decay rate, shape (T, n_rho).

    The infinite sum is truncated at the available pre-period history.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=np.float64))
    forcing.check_covers(T, period)
    H = forcing.history.size
    x = np.concatenate([forcing.history, forcing.values])
    L = kernels.lag_recursion(np.ascontiguousarray(x), np.ascontiguousarray(rho))
    return L[H + _year_index(T, period)]


def build_design(forcing: ForcingSeries, rho: float, K: int, period: int, T: int) -> np.ndarray:
    """Design matrix, columns [1, x, lag, cos_1, sin_1, ..., cos_K, sin_K]."""
    _check_k(K, period)
    forcing.check_covers(T, period)
    x = forcing.values[_year_index(T, period)]
    lag = lag_columns(forcing, rho, T, period)[:, 0]
    return np.column_stack([np.ones(T), x, lag, harmonic_columns(T, K, period)])


def _check_k(K: int, period: int) -> None:
    if K < 0:
        raise InputError("K must be >= 0")
    if K > 0 and 2 * K >= period:
        raise InputError(f"K={K} harmonics need period > {2 * K}")


# ------------------------------------------------------------ fitting

class _Profile:
    """Profile objective for a block of cells, vectorised over cells."""

    def __init__(self, y: np.ndarray, forcing: ForcingSeries, K: int, period: int):
        R, T, C = y.shape
        self.y = y
        self.forcing = forcing
        self.T, self.period = T, period
        x = forcing.values[_year_index(T, period)]
        self.degenerate_forcing = np.ptp(x) <= 1e-12 * max(1.0, np.abs(x).max())
        cols = [np.ones(T)] + ([] if self.degenerate_forcing else [x])
        self.common = np.column_stack(cols + [harmonic_columns(T, K, period)])
        self.qc, _ = np.linalg.qr(self.common)
        self.yt = y - np.einsum("tp,rpc->rtc", self.qc, np.einsum("tp,rtc->rpc", self.qc, y))
        self.rss0 = np.einsum("rtc,rtc->rc", self.yt, self.yt)
        self.floor = 1e-300 + 1e-28 * np.einsum("rtc,rtc->rc", y, y)

    def rss(self, rho: np.ndarray):
        """Per-member RSS at one rho per cell, plus the partialled lag column."""
        L = lag_columns(self.forcing, rho, self.T, self.period)      # (T, C)
        Lt = L - self.qc @ (self.qc.T @ L)
        ll = np.einsum("tc,tc->c", Lt, Lt)
        lnorm = np.einsum("tc,tc->c", L, L)
        ok = ll > 1e-12 * np.maximum(lnorm, 1e-300)
        ly = np.einsum("tc,rtc->rc", Lt, self.yt)
        drop = np.where(ok, ly * ly / np.where(ok, ll, 1.0), 0.0)
        return np.maximum(self.rss0 - drop, self.floor), ok

    def objective(self, rho: np.ndarray) -> np.ndarray:
        r, _ = self.rss(rho)
        return -np.log(r).sum(axis=0)


def profile_objective(series: np.ndarray, forcing: ForcingSeries, rho: float,
                      K: int, period: int) -> float:
    """Objective -sum_r log RSS_r(rho) for one cell's series (R, T)."""
    y = np.asarray(series, dtype=np.float64)[:, :, None]
    return float(_Profile(y, forcing, K, period).objective(np.array([rho]))[0])


def _fit_block(y: np.ndarray, forcing: ForcingSeries, K: int, period: int,
               n_grid: int, tol: float):
    R, T, C = y.shape
    prof = _Profile(y, forcing, K, period)
    if prof.degenerate_forcing:
        rho = np.zeros(C)
        deg = np.ones(C, dtype=bool)
    else:
        grid = np.linspace(0.0, 1.0, n_grid)
        vals = np.array([prof.objective(np.full(C, r)) for r in grid])    # (n_grid, C)
        best = np.argmax(vals, axis=0)
        lo = grid[np.maximum(best - 1, 0)]
        hi = grid[np.minimum(best + 1, n_grid - 1)]
        c1 = hi - GOLDEN * (hi - lo)
        c2 = lo + GOLDEN * (hi - lo)
        f1, f2 = prof.objective(c1), prof.objective(c2)
        while np.max(hi - lo) > tol:
            left = f1 >= f2
            hi = np.where(left, c2, hi)
            lo = np.where(left, lo, c1)
            new = np.where(left, hi - GOLDEN * (hi - lo), lo + GOLDEN * (hi - lo))
            fnew = prof.objective(new)
            c2, f2, c1, f1 = (np.where(left, c1, new), np.where(left, f1, fnew),
                              np.where(left, new, c2), np.where(left, fnew, f2))
        mid = np.clip((lo + hi) / 2, 0.0, 1.0)
        fm = prof.objective(mid)
        fbest = vals[best, np.arange(C)]
        rho = np.where(fm >= fbest, mid, grid[best])
        _, ok = prof.rss(rho)
        deg = ~ok
    # coefficients at rho-hat from the member-mean series
    ybar = y.mean(axis=0)                                          # (T, C)
    common = prof.common
    pinv = np.linalg.pinv(common)
    if prof.degenerate_forcing:
        beta2 = np.zeros(C)
        L = np.zeros((T, C))
    else:
        L = lag_columns(forcing, rho, T, period)
        Lt = L - prof.qc @ (prof.qc.T @ L)
        ll = np.einsum("tc,tc->c", Lt, Lt)
        yb = ybar - prof.qc @ (prof.qc.T @ ybar)
        beta2 = np.where(deg, 0.0, np.einsum("tc,tc->c", Lt, yb) / np.where(deg, 1.0, ll))
    gamma = pinv @ (ybar - beta2 * L)                              # (p, C)
    fitted = common @ gamma + beta2 * L
    resid = y - fitted[None]
    sigma = np.sqrt(np.einsum("rtc,rtc->c", resid, resid) / (R * T))
    if prof.degenerate_forcing:
        beta0, beta1, harm = gamma[0], np.zeros(C), gamma[1:]
    else:
        beta0, beta1, harm = gamma[0], gamma[1], gamma[2:]
    return beta0, beta1, beta2, rho, sigma, harm, deg


def fit_grid_trend(series, forcing: ForcingSeries, K: int = 0, period: int = 1, *,
                   n_grid: int = 101, tol: float = 1e-4, threads: int = 1) -> TrendParams:
    """Fit the trend model independently at every cell.

    Parameters
    ----------
    series : array_like, shape (R, T, ...)
        Member series; trailing axes are cells.
    forcing : ForcingSeries
        Annual forcing aligned with the first year.
    K : int
        Number of harmonic pairs (0 for annual data).
    period : int
        Steps per year.

    Returns
    -------
    TrendParams
        ``degenerate`` marks cells whose lag column was dropped.
    """
    y = np.asarray(series, dtype=np.float64)
    if y.ndim < 2:
        raise InputError("series must have shape (R, T, ...)")
    _check_k(K, period)
    R, T = y.shape[:2]
    cells = y.shape[2:]
    if T <= 3 + 2 * K:
        raise InputError(f"T={T} too short for {3 + 2 * K} regressors")
    forcing.check_covers(T, period)
    flat = y.reshape(R, T, -1)
    C = flat.shape[2]
    parts = ordered_map(lambda sl: _fit_block(np.ascontiguousarray(flat[:, :, sl]), forcing,
                                              K, period, n_grid, tol),
                        chunks(C, CELL_CHUNK), threads)
    cat = [np.concatenate([p[k] for p in parts], axis=-1) for k in range(7)]
    beta0, beta1, beta2, rho, sigma, harm, deg = cat
    a = harm[0::2].reshape((K,) + cells)
    b = harm[1::2].reshape((K,) + cells)
    return TrendParams(beta0.reshape(cells), beta1.reshape(cells), beta2.reshape(cells),
                       rho.reshape(cells), sigma.reshape(cells), a, b, K, period,
                       deg.reshape(cells))


def mean_field(params: TrendParams, forcing: ForcingSeries, T: int) -> np.ndarray:
    """m_t for t = 1..T at every cell, shape (T, *cells)."""
    forcing.check_covers(T, params.period)
    C = int(np.prod(params.shape, dtype=np.int64))
    x = forcing.values[_year_index(T, params.period)]
    L = lag_columns(forcing, params.rho.ravel(), T, params.period)   # (T, C)
    coef = params.coefficient_matrix()
    out = coef[0][None] + x[:, None] * coef[1][None] + L * coef[2][None]
    if params.K:
        out = out + harmonic_columns(T, params.K, params.period) @ coef[3:]
    return out.reshape((T,) + params.shape) if C else out


def evaluate_mean(params: TrendParams, forcing: ForcingSeries, t: int) -> np.ndarray:
    """m_t at step ``t`` (1-based) for every cell."""
    if t < 1:
        raise InputError("t is 1-based")
    return mean_field(params, forcing, t)[t - 1]


def detrend_rescale(field, params: TrendParams, forcing: ForcingSeries) -> np.ndarray:
    """Z = (y - m_t) / sigma."""
    y = field.data if isinstance(field, EnsembleField) else np.asarray(field, dtype=np.float64)
    if np.any(params.sigma <= 0):
        bad = tuple(int(k) for k in np.argwhere(params.sigma <= 0)[0])
        raise InputError(f"sigma is zero at cell {bad}")
    m = mean_field(params, forcing, y.shape[1])
    return (y - m[None]) / params.sigma


def recompose(Z, params: TrendParams, forcing: ForcingSeries) -> np.ndarray:
    """y = m_t + sigma Z."""
    Z = np.asarray(Z, dtype=np.float64)
    return mean_field(params, forcing, Z.shape[1])[None] + params.sigma * Z


def i_fit(field, m_hat) -> np.ndarray:
    """Goodness-of-fit index per cell; (R-1)/R when m_hat is the ensemble mean."""
    y = field.data if isinstance(field, EnsembleField) else np.asarray(field, dtype=np.float64)
    R = y.shape[0]
    if R < 2:
        raise InputError("I_fit needs R >= 2")
    num = ((y - np.asarray(m_hat)[None]) ** 2).sum(axis=(0, 1))
    den = R / (R - 1) * ((y - y.mean(axis=0)) ** 2).sum(axis=(0, 1))
    if np.any(den == 0):
        raise InputError("I_fit denominator is zero (identical members)")
    return num / den


def trend_bic(sigma: np.ndarray, K: int, n: int) -> np.ndarray:
    """BIC with (3+2K)+2 parameters under the pooled Gaussian likelihood."""
    s2 = np.maximum(np.asarray(sigma) ** 2, 1e-300)
    loglik = -0.5 * n * (np.log(2 * np.pi * s2) + 1.0)
    return -2 * loglik + (3 + 2 * K + 2) * np.log(n)


def select_K(series, forcing: ForcingSeries, period: int, K_candidates, *,
             threads: int = 1):
    """Per-cell harmonic count minimising the trend BIC.

    Returns
    -------
    K : ndarray of int
        Choice per cell.
    table : ndarray
        BIC per candidate, shape (n_candidates, *cells).
    """
    cands = sorted(int(k) for k in K_candidates)
    if not cands:
        raise InputError("K_candidates is empty")
    y = np.asarray(series, dtype=np.float64)
    n = y.shape[0] * y.shape[1]
    table = []
    for K in cands:
        p = fit_grid_trend(y, forcing, K, period, threads=threads)
        table.append(trend_bic(p.sigma, K, n))
    table = np.array(table)
    return np.asarray(cands)[np.argmin(table, axis=0)], table
