"""Band-limit selection, nugget estimation and coefficient-series screens."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

from ..errors import InputError
from ..grid_core import GridSpec, LandMask
from ..sht import SphCoeffs, forward_sht, get_plan, inverse_sht_masked
from .autoregression import fit_ar_batch
from .covariance import NuggetField

VAR_FLOOR_REL = 1e-20


def _region_cells(mask: LandMask, region: str) -> np.ndarray:
    if region == "land":
        cells = mask.mask
    elif region == "ocean":
        cells = ~mask.mask
    else:
        raise InputError(f"region must be 'land' or 'ocean', got {region!r}")
    if not cells.any():
        raise InputError(f"{region} region is empty")
    return cells


def select_Q(Z, grid: GridSpec, mask: LandMask, region: str, Q_candidates,
             coeffs: SphCoeffs | None = None) -> tuple[int, dict]:
    """Choose the band limit of one region by the median per-slice BIC.

    Parameters
    ----------
    Z : array_like, shape (R, T, I, J)
        Standardized stochastic component.
    grid, mask : GridSpec, LandMask
    region : {"land", "ocean"}
    Q_candidates : iterable of int
    coeffs : SphCoeffs, optional
        Forward transform of ``Z`` at band limit >= max(Q_candidates).

    Returns
    -------
    Q : int
        Candidate with the smallest median over (r, t) of
        log(n) Q^2 + n log(2 pi) + sum log v^2 + sum (eps / v)^2.
    table : dict
        ``{Q: median BIC}`` plus ``"per_slice"`` with all (r, t) values.
    """
    Z = np.asarray(Z, dtype=np.float64)
    cells = _region_cells(mask, region)
    cands = sorted({int(q) for q in Q_candidates})
    if not cands:
        raise InputError("no Q candidates")
    Qmax = cands[-1]
    if coeffs is None:
        coeffs = forward_sht(Z, Qmax, grid)
    if coeffs.Q < Qmax:
        raise InputError(f"coefficients at Q={coeffs.Q} cannot score candidate {Qmax}")
    n = int(cells.sum())
    Zr = Z[..., cells]
    floor = VAR_FLOOR_REL * max(float(np.mean(Zr * Zr)), np.finfo(float).tiny)
    plan = get_plan(grid, coeffs.Q)
    vals = coeffs.values.reshape((-1, coeffs.Q ** 2))
    medians = {}
    per_slice = {}
    for Q in cands:
        if Q > plan.Q:
            raise InputError(f"candidate Q={Q} exceeds coefficient band limit")
        recon = plan.inverse(vals, Q).reshape(Z.shape)
        eps = Zr - recon[..., cells]
        v2 = np.maximum(np.mean(eps * eps, axis=(0, 1)), floor)
        bic = (np.log(n) * Q * Q + n * np.log(2 * np.pi) + np.sum(np.log(v2))
               + np.sum(eps * eps / v2, axis=-1))
        per_slice[Q] = bic
        medians[Q] = float(np.median(bic))
    best = min(cands, key=lambda q: (medians[q], q))
    table = dict(medians)
    table["per_slice"] = per_slice
    return best, table


def estimate_nugget(Z, coeffs: SphCoeffs, grid: GridSpec, mask: LandMask,
                    Q_l: int, Q_o: int) -> NuggetField:
    """Root-mean-square over (r, t) of the masked reconstruction residual."""
    Z = np.asarray(Z, dtype=np.float64)
    recon = inverse_sht_masked(coeffs, grid, mask, Q_l, Q_o)
    eps = Z - recon
    return NuggetField(np.sqrt(np.mean(eps * eps, axis=(0, 1))))


def jarque_bera(series) -> float:
    """Skewness-kurtosis omnibus statistic n/6 (S^2 + (K - 3)^2 / 4)."""
    x = np.asarray(series, dtype=np.float64).ravel()
    if x.size < 20:
        raise InputError("Gaussianity test needs at least 20 values")
    d = x - x.mean()
    m2 = np.mean(d * d)
    if not m2 > 1e-300 or np.ptp(x) == 0:
        raise InputError("Gaussianity test on a constant series")
    skew = np.mean(d ** 3) / m2 ** 1.5
    kurt = np.mean(d ** 4) / m2 ** 2
    return float(x.size / 6.0 * (skew * skew + 0.25 * (kurt - 3.0) ** 2))


def gaussianity_test(series, alpha: float = 0.05) -> bool:
    """True when the series is flagged non-Gaussian at level ``alpha``.

    The omnibus statistic is compared with the chi-square(2) quantile, which
    has the closed form -2 log(alpha).
    """
    if not 0 < alpha < 1:
        raise InputError("alpha must be in (0, 1)")
    return jarque_bera(series) > -2.0 * np.log(alpha)


def cross_corr_check(latent, alpha: float = 0.05, max_pairs: int = 1000,
                     seed: int = 0) -> float:
    """Fraction of significant lag-1 cross-correlations between AR(1) residuals.

    Parameters
    ----------
    latent : array_like, shape (R, T, N)
        N >= 2 coefficient series.
    alpha : float
        Significance level.
    max_pairs : int
        Ordered pairs (i, j), i != j, are all used when there are at most
        this many; otherwise this many are sampled without replacement.
    seed : int
        Seed for pair sampling.

    Notes
    -----
    For a pair the statistic is corr(e_i(t), e_j(t-1)) pooled over members,
    referred to N(0, 1/M) with M the number of products.
    """
    s = np.asarray(latent, dtype=np.float64)
    if s.ndim != 3 or s.shape[2] < 2:
        raise InputError("need an (R, T, N) array with N >= 2")
    R, T, N = s.shape
    s = s - s.mean(axis=(0, 1))
    _, _, e = fit_ar_batch(s, 1)
    e = e - e.mean(axis=(0, 1))
    lead = e[:, 1:, :].reshape(-1, N)
    lag = e[:, :-1, :].reshape(-1, N)
    M = lead.shape[0]
    total = N * (N - 1)
    if total <= max_pairs:
        ii, jj = np.nonzero(~np.eye(N, dtype=bool))
    else:
        rng = np.random.default_rng(seed)
        pick = np.sort(rng.choice(total, size=max_pairs, replace=False))
        ii = pick // (N - 1)
        jj = pick % (N - 1)
        jj = jj + (jj >= ii)
    sa = np.sqrt(np.sum(lead * lead, axis=0))
    sb = np.sqrt(np.sum(lag * lag, axis=0))
    num = np.einsum("kp,kp->p", lead[:, ii], lag[:, jj])
    with np.errstate(invalid="ignore", divide="ignore"):
        r = num / (sa[ii] * sb[jj])
    r = np.nan_to_num(r)
    p = 2.0 * ndtr(-np.abs(r) * np.sqrt(M))
    return float(np.mean(p < alpha))
