"""Diagonal autoregression of the real coefficient series.

Each real coefficient follows its own AR(P) with coefficients pooled over
ensemble members.  Estimation is conditional least squares without
intercept (the series are centred upstream).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError, NumericalError

GRAM_RCOND = 1e-12


@dataclass
class ArFit:
    """AR fit of a single series."""

    phi: np.ndarray
    innovation_var: float
    loglik: float           # Gaussian conditional log-likelihood at the estimate
    n: int                  # residual count R (T - P)

    @property
    def P(self) -> int:
        return int(self.phi.size)


@dataclass
class ArParams:
    """Per-coefficient AR coefficients; ``phi`` has shape (P, Q**2)."""

    phi: np.ndarray

    @property
    def P(self) -> int:
        return int(self.phi.shape[0])

    def spectral_radius(self) -> np.ndarray:
        return companion_radius(self.phi)

    def stationary(self) -> np.ndarray:
        return self.spectral_radius() < 1.0


def companion_radius(phi: np.ndarray) -> np.ndarray:
    """Spectral radius of the AR companion matrix; ``phi`` has shape (P, N)."""
    phi = np.atleast_2d(np.asarray(phi, dtype=np.float64))
    P, N = phi.shape
    if P == 1:
        return np.abs(phi[0])
    C = np.zeros((N, P, P))
    C[:, 0, :] = phi.T
    C[:, np.arange(1, P), np.arange(P - 1)] = 1.0
    return np.abs(np.linalg.eigvals(C)).max(axis=-1)


def lag_design(y: np.ndarray, P: int) -> tuple[np.ndarray, np.ndarray]:
    """Responses (R, T-P, N) and lagged regressors (R, T-P, N, P)."""
    T = y.shape[1]
    X = np.stack([y[:, P - p: T - p] for p in range(1, P + 1)], axis=-1)
    return y[:, P:], X


def fit_ar_batch(series, P: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pooled conditional least squares for N series at once.

    Parameters
    ----------
    series : array_like, shape (R, T, N)
    P : int

    Returns
    -------
    phi : ndarray, shape (P, N)
    innovation_var : ndarray, shape (N,)
        Mean squared pooled residual.
    residuals : ndarray, shape (R, T - P, N)
    """
    y = np.asarray(series, dtype=np.float64)
    if y.ndim != 3:
        raise InputError("series must have shape (R, T, N)")
    R, T, N = y.shape
    if P < 1:
        raise InputError("AR order must be at least 1")
    if T <= 10 * P:
        raise InputError(f"series of length {T} too short for AR order {P}")
    resp, X = lag_design(y, P)
    G = np.einsum("rtnp,rtnk->npk", X, X)
    b = np.einsum("rtnp,rtn->np", X, resp)
    scale = np.maximum(np.abs(np.diagonal(G, axis1=1, axis2=2)).max(axis=1), 1e-300)
    if P == 1:
        bad = G[:, 0, 0] <= GRAM_RCOND * scale
    else:
        cond = np.linalg.cond(G)
        bad = ~np.isfinite(cond) | (cond > 1.0 / GRAM_RCOND)
    if np.any(bad):
        raise NumericalError(f"singular lag Gram matrix for {int(bad.sum())} series")
    phi = np.linalg.solve(G, b[..., None])[..., 0]
    resid = resp - np.einsum("rtnp,np->rtn", X, phi)
    var = np.mean(resid * resid, axis=(0, 1))
    return phi.T.copy(), var, resid


def gaussian_loglik(var, n: int):
    """Conditional Gaussian log-likelihood at the least-squares estimate."""
    var = np.asarray(var, dtype=np.float64)
    return -0.5 * n * (np.log(2 * np.pi) + 1.0 + np.log(var))


def fit_ar(series, P: int = 1) -> ArFit:
    """Fit an AR(P) to an (R, T) array of member series, pooled over members."""
    y = np.atleast_2d(np.asarray(series, dtype=np.float64))
    phi, var, _ = fit_ar_batch(y[..., None], P)
    n = y.shape[0] * (y.shape[1] - P)
    return ArFit(phi=phi[:, 0], innovation_var=float(var[0]),
                 loglik=float(gaussian_loglik(var[0], n)), n=n)


def gaussian_ar_bic(var, P: int, R: int, T: int):
    """BIC(P) = P log{(T-P)R} + R(T-P){log(2 pi) + 1} + R(T-P) log u^2."""
    n = (T - P) * R
    return P * np.log(n) + n * (np.log(2 * np.pi) + 1.0) + n * np.log(np.asarray(var))


def select_P(series, P_candidates=(1, 2, 3, 4, 5), use_tgh: bool = False):
    """Per-series BIC choice of the AR order.

    Parameters
    ----------
    series : array_like, shape (R, T, N)
    P_candidates : iterable of int
    use_tgh : bool
        Score with the TGH-AR likelihood instead of the Gaussian one.

    Returns
    -------
    best : ndarray of int, shape (N,)
    table : ndarray, shape (len(P_candidates), N)
        BIC values.

    Notes
    -----
    Gaussian scores condition on the first max(P_candidates) values for every
    candidate, so all orders are compared on the same R (T - max P) residuals.
    """
    y = np.asarray(series, dtype=np.float64)
    if y.ndim == 2:
        y = y[..., None]
    R, T, N = y.shape
    cands = [int(p) for p in P_candidates]
    if not cands or min(cands) < 1:
        raise InputError("AR order candidates must be >= 1")
    table = np.empty((len(cands), N))
    Pmax = max(cands)
    for k, P in enumerate(cands):
        if use_tgh:
            from .tgh import fit_tgh_ar
            table[k] = [fit_tgh_ar(y[:, :, n], P).bic(R, T) for n in range(N)]
        else:
            # common response window t > Pmax so every candidate sees the same n
            Te = T - Pmax + P
            _, var, _ = fit_ar_batch(y[:, Pmax - P:], P)
            table[k] = gaussian_ar_bic(var, P, R, Te)
    best = np.asarray(cands)[np.argmin(table, axis=0)]
    return best, table


def modal_order(best: np.ndarray, P_candidates) -> int:
    """Most frequent per-series choice; ties go to the smaller order."""
    cands = sorted(int(p) for p in P_candidates)
    counts = [int(np.sum(best == p)) for p in cands]
    return cands[int(np.argmax(counts))]
