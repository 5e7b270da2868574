"""Tukey g-and-h transform and the TGH autoregressive fit.

The observed real coefficient series is modelled as

    s~_t = omega * tau_{g,h}(s''_t),

where s''_t is a Gaussian AR(P) process with unit marginal variance.  The
likelihood is maximized with the inverse transform replaced by a monotone
piecewise-linear interpolant (the approximated likelihood estimator).  After
the fit, lambda = sd(s~) / sd(s'') and the latent series used downstream is
s^ = lambda * s''.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtri

from .. import kernels
from ..errors import InputError
from .autoregression import fit_ar

N_KNOTS = 201
KNOT_SPAN = 5.0
H_MAX = 0.9
OMEGA_MIN = 1e-6
G_MAX = 3.0
KAPPA_MAX = 5.0       # bound on atanh of the partial autocorrelations
MAX_ITER = 500


def _check_h(h) -> None:
    if np.any(np.asarray(h) < 0):
        raise InputError("tail parameter h must be non-negative")


def tgh_forward(s, g: float, h: float):
    """Evaluate tau_{g,h}(s) = g^{-1}(exp(gs) - 1) exp(hs^2/2); g = 0 is the limit s exp(hs^2/2)."""
    _check_h(h)
    s = np.asarray(s, dtype=np.float64)
    with np.errstate(over="ignore"):
        out = kernels._tau_np(s, float(g), float(h))
    return out if out.ndim else float(out)


def tgh_derivative(s, g: float, h: float):
    """d tau / ds, positive for h >= 0."""
    _check_h(h)
    s = np.asarray(s, dtype=np.float64)
    with np.errstate(over="ignore"):
        return kernels._dtau_np(s, float(g), float(h))


def tgh_inverse(y, g: float, h: float):
    """Solve tau_{g,h}(s) = y; values outside the range of tau map to -inf / +inf."""
    _check_h(h)
    y = np.asarray(y, dtype=np.float64)
    out = kernels.tgh_inverse(np.ascontiguousarray(y.ravel()), float(g), float(h)).reshape(y.shape)
    return out if out.ndim else float(out)


def log_tgh_derivative(s: np.ndarray, g: float, h: float) -> np.ndarray:
    """log tau'(s), written to stay finite in the tails."""
    hs = 0.5 * h * s * s
    if g == 0.0:
        return hs + np.log1p(h * s * s)
    return hs + np.log(np.exp(g * s) + h * s * np.expm1(g * s) / g)


class PiecewiseInverse:
    """Monotone piecewise-linear surrogate of tau^{-1} on tau([-5, 5]).

    Targets beyond the knot range fall back to the exact inverse.
    """

    def __init__(self, g: float, h: float, n_knots: int = N_KNOTS, span: float = KNOT_SPAN):
        self.g, self.h = float(g), float(h)
        self.s_knots = np.linspace(-span, span, n_knots)
        self.y_knots = kernels._tau_np(self.s_knots, self.g, self.h)

    def __call__(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        out = np.interp(y, self.y_knots, self.s_knots)
        outside = (y < self.y_knots[0]) | (y > self.y_knots[-1])
        if outside.any():
            out[outside] = kernels.tgh_inverse(np.ascontiguousarray(y[outside]), self.g, self.h)
        return out


# ------------------------------------------------------------ unit-variance AR likelihood

def pacf_to_ar(kappa: np.ndarray) -> tuple[np.ndarray, float]:
    """Durbin-Levinson map from partial autocorrelations to (phi, innovation variance).

    The process has unit marginal variance, so the returned variance is
    prod(1 - kappa_k^2).
    """
    phi = np.zeros(0)
    v = 1.0
    for k in kappa:
        phi = np.concatenate([phi - k * phi[::-1], [k]])
        v *= 1.0 - k * k
    return phi, v


def ar_to_pacf(phi: np.ndarray) -> np.ndarray:
    """Inverse Durbin-Levinson recursion; requires a stationary phi."""
    a = np.array(phi, dtype=np.float64)
    P = a.size
    kappa = np.zeros(P)
    for k in range(P - 1, -1, -1):
        kappa[k] = a[k]
        if k == 0:
            break
        denom = 1.0 - a[k] ** 2
        a = (a[:k] + a[k] * a[:k][::-1]) / denom
    return kappa


def unit_ar_loglik(s: np.ndarray, kappa: np.ndarray) -> float:
    """Exact Gaussian log-likelihood of (R, T) series under a unit-variance AR.

    The first P values use the one-step predictors of increasing order, the
    rest the order-P predictor.
    """
    s = np.atleast_2d(s)
    R, T = s.shape
    P = kappa.size
    phi = np.zeros(0)
    v = 1.0
    ll = 0.0
    c = -0.5 * np.log(2 * np.pi)
    for k in range(P):
        pred = s[:, :k][:, ::-1] @ phi if k else 0.0
        e = s[:, k] - pred
        ll += R * (c - 0.5 * np.log(v)) - 0.5 * np.sum(e * e) / v
        phi = np.concatenate([phi - kappa[k] * phi[::-1], [kappa[k]]])
        v *= 1.0 - kappa[k] ** 2
    e = s[:, P:].copy()
    for p in range(P):
        e -= phi[p] * s[:, P - 1 - p: T - 1 - p]
    n = e.size
    ll += n * (c - 0.5 * np.log(v)) - 0.5 * np.sum(e * e) / v
    return float(ll)


def tgh_ar_loglik(y: np.ndarray, omega: float, g: float, h: float, kappa: np.ndarray,
                  inverse=None) -> float:
    """Sum over members of the TGH-AR log-likelihood.

    ``inverse`` maps y / omega to s''; the piecewise-linear surrogate by
    default, or pass :func:`tgh_inverse` wrapped in a lambda for the exact
    value.
    """
    y = np.atleast_2d(y)
    inv = inverse if inverse is not None else PiecewiseInverse(g, h)
    s = inv(y / omega)
    if not np.all(np.isfinite(s)):
        return -np.inf
    with np.errstate(over="ignore", invalid="ignore"):
        jac = log_tgh_derivative(s, g, h)
    if not np.all(np.isfinite(jac)):
        return -np.inf
    return unit_ar_loglik(s, kappa) - y.size * np.log(omega) - float(np.sum(jac))


# ------------------------------------------------------------ fitting

@dataclass
class TghFit:
    """Result for one coefficient series."""

    omega: float
    g: float
    h: float
    lam: float
    phi: np.ndarray
    innovation_var: float     # innovation variance of the latent s^ = lambda s''
    loglik: float
    latent: np.ndarray        # s^, shape (R, T)
    converged: bool
    fallback: bool = False

    @property
    def P(self) -> int:
        return int(self.phi.size)

    def bic(self, R: int, T: int) -> float:
        return -2.0 * self.loglik + (self.P + 3) * np.log(R * (T - self.P))


def _start_values(y: np.ndarray, P: int) -> np.ndarray:
    flat = y.ravel()
    q10, q25, q50, q75, q90 = np.quantile(flat, [0.1, 0.25, 0.5, 0.75, 0.9])
    z90 = ndtri(0.9)
    g0 = 0.0
    if q90 - q50 > 0 and q50 - q10 > 0:
        g0 = float(np.clip(np.log((q90 - q50) / (q50 - q10)) / z90, -1.0, 1.0))
    z75 = ndtri(0.75)
    span = kernels._tau_np(np.array([-z75, z75]), g0, 0.0)
    omega0 = max((q75 - q25) / (span[1] - span[0]), OMEGA_MIN * 10)
    s0 = kernels.tgh_inverse(np.ascontiguousarray(flat / omega0), g0, 0.0).reshape(y.shape)
    s0 = np.where(np.isfinite(s0), s0, 0.0)
    s0 = s0 - s0.mean()
    # partial autocorrelations from pooled sample autocorrelations
    denom = np.sum(s0 * s0)
    acf = np.array([1.0] + [np.sum(s0[:, k:] * s0[:, : s0.shape[1] - k]) / denom
                            for k in range(1, P + 1)])
    kappa = np.zeros(P)
    phi = np.zeros(0)
    v = 1.0
    for k in range(P):
        num = acf[k + 1] - (phi @ acf[1: k + 1][::-1] if k else 0.0)
        kk = float(np.clip(num / v, -0.95, 0.95))
        kappa[k] = kk
        phi = np.concatenate([phi - kk * phi[::-1], [kk]])
        v *= 1.0 - kk * kk
    return np.concatenate([[np.log(omega0), g0, 0.05], np.arctanh(kappa)])


def _simplex(x0: np.ndarray, steps: np.ndarray, hi: np.ndarray) -> np.ndarray:
    out = np.tile(x0, (x0.size + 1, 1))
    for k in range(x0.size):
        out[k + 1, k] += steps[k] if x0[k] + steps[k] <= hi[k] else -steps[k]
    return out


def _unpack(x: np.ndarray):
    return np.exp(x[0]), x[1], x[2], np.tanh(x[3:])


def fit_tgh_ar(series, P: int = 1, in_sgh: bool = True, *, max_iter: int = MAX_ITER) -> TghFit:
    """Maximum approximated likelihood fit of a TGH-AR(P) model.

    Parameters
    ----------
    series : array_like, shape (R, T)
        Real coefficient series (mean approximately zero), one row per member.
    P : int
        Autoregressive order.
    in_sgh : bool
        When False the transform is the identity and the result equals
        :func:`fit_ar`.
    max_iter : int
        Iteration cap for each Nelder-Mead pass.

    Returns
    -------
    TghFit
        If the optimizer does not converge the fit falls back to g = h = 0
        (identity transform) with ``fallback=True`` and a warning.
    """
    y = np.atleast_2d(np.asarray(series, dtype=np.float64))
    R, T = y.shape
    if T <= 10 * P:
        raise InputError(f"series of length {T} too short for AR order {P}")
    if not in_sgh:
        return _identity_fit(y, P)

    lo = np.concatenate([[np.log(OMEGA_MIN), -G_MAX, 0.0], np.full(P, -KAPPA_MAX)])
    hi = np.concatenate([[np.inf, G_MAX, H_MAX], np.full(P, KAPPA_MAX)])

    def nll(x):
        if np.any(x < lo) or np.any(x > hi):
            return np.inf
        omega, g, h, kappa = _unpack(x)
        v = -tgh_ar_loglik(y, omega, g, h, kappa)
        return v if np.isfinite(v) else np.inf

    x0 = np.clip(_start_values(y, P), lo, hi)
    steps = np.concatenate([[0.1, 0.1, 0.05], np.full(P, 0.1)])
    converged = False
    best = None
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for _ in range(3):
            x0 = np.clip(x0, lo, hi)
            simplex = _simplex(x0, steps, hi)
            res = minimize(nll, x0, method="Nelder-Mead",
                           options={"initial_simplex": simplex, "maxiter": max_iter,
                                    "xatol": 1e-5, "fatol": 1e-7})
            improved = best is None or res.fun < best.fun - 1e-7
            if best is None or res.fun < best.fun:
                best = res
            x0 = best.x
            if res.success and not improved:
                converged = True
                break
            converged = bool(res.success)
    if best is None or not np.isfinite(best.fun) or not converged:
        warnings.warn("TGH fit did not converge; using the Gaussian AR fallback", RuntimeWarning)
        out = _identity_fit(y, P)
        out.fallback = True
        return out

    omega, g, h, kappa = _unpack(best.x)
    phi, v_unit = pacf_to_ar(kappa)
    s2 = tgh_inverse(y / omega, g, h)
    lam = float(np.std(y) / np.std(s2))
    return TghFit(omega=float(omega), g=float(g), h=float(h), lam=lam, phi=phi,
                  innovation_var=float(v_unit * lam * lam), loglik=float(-best.fun),
                  latent=lam * s2, converged=True)


def _identity_fit(y: np.ndarray, P: int) -> TghFit:
    ar = fit_ar(y, P)
    return TghFit(omega=1.0, g=0.0, h=0.0, lam=1.0, phi=ar.phi, innovation_var=ar.innovation_var,
                  loglik=ar.loglik, latent=y.copy(), converged=True)


# ------------------------------------------------------------ per-coefficient table

@dataclass
class TghParams:
    """TGH parameters per real coefficient index; identity where ``in_sgh`` is False."""

    omega: np.ndarray
    g: np.ndarray
    h: np.ndarray
    lam: np.ndarray
    in_sgh: np.ndarray

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=np.float64)
        self.g = np.asarray(self.g, dtype=np.float64)
        self.h = np.asarray(self.h, dtype=np.float64)
        self.lam = np.asarray(self.lam, dtype=np.float64)
        self.in_sgh = np.asarray(self.in_sgh, dtype=bool)
        off = ~self.in_sgh
        if (np.any(self.omega[off] != 1) or np.any(self.g[off] != 0)
                or np.any(self.h[off] != 0) or np.any(self.lam[off] != 1)):
            raise InputError("TGH parameters outside S_gh must be the identity")
        if np.any(self.h < 0) or np.any(self.omega <= 0) or np.any(self.lam <= 0):
            raise InputError("TGH parameters need h >= 0, omega > 0, lambda > 0")

    @classmethod
    def identity(cls, n: int) -> "TghParams":
        return cls(np.ones(n), np.zeros(n), np.zeros(n), np.ones(n), np.zeros(n, dtype=bool))

    @property
    def size(self) -> int:
        return int(np.count_nonzero(self.in_sgh))

    def forward(self, latent: np.ndarray) -> np.ndarray:
        """s~ = omega tau_{g,h}(s^ / lambda) on S_gh entries; last axis indexes coefficients."""
        out = np.array(latent, dtype=np.float64, copy=True)
        for k in np.nonzero(self.in_sgh)[0]:
            out[..., k] = self.omega[k] * tgh_forward(out[..., k] / self.lam[k], self.g[k], self.h[k])
        return out

    def inverse(self, series: np.ndarray) -> np.ndarray:
        """s^ = lambda tau^{-1}(s~ / omega) on S_gh entries."""
        out = np.array(series, dtype=np.float64, copy=True)
        for k in np.nonzero(self.in_sgh)[0]:
            out[..., k] = self.lam[k] * tgh_inverse(out[..., k] / self.omega[k], self.g[k], self.h[k])
        return out
