"""Spherical harmonic transforms on latitude-longitude grids.

Coefficients of degree ``Q`` are stored flat with ``s_q^m`` at index
``q*q + q + m``. The basis is

    H_q^m(theta, psi) = sqrt((2q+1)/(4 pi) (q-m)!/(q+m)!) P_q^m(cos theta) e^{i m psi}

with P_q^m free of the Condon-Shortley phase, so H_q^{-m} = (-1)^m conj(H_q^m).

The forward transform integrates over longitude with an FFT, extends each
order-m colatitude profile to a periodic function on [0, 2 pi), reads off its
Fourier coefficients and projects them on H_q^m through Wigner-d values at
pi/2. It is exact for band-limited fields and costs O(Q^3) per slice once the
FFTs are done.
"""
from __future__ import annotations

import csv
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import InputError
from .grid_core import GridSpec, LandMask

SYMMETRY_TOL = 1e-8


def coeff_index(q: int, m: int) -> int:
    """Flat index of s_q^m."""
    if abs(m) > q:
        raise InputError(f"|m| = {abs(m)} exceeds q = {q}")
    return q * q + q + m


def degree_order(Q: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays (q, m) for every flat index below Q**2."""
    q = np.repeat(np.arange(Q), 2 * np.arange(Q) + 1)
    m = np.arange(Q * Q) - q * q - q
    return q, m


def max_bandlimit(I: int, J: int) -> int:
    """Largest degree count recoverable on an I x J grid."""
    if I < 2 or J < 1:
        raise InputError("need I >= 2 and J >= 1")
    return int(min(I - 1, (J + 1) // 2))


def theta_integral(m: int) -> complex:
    """Integral of exp(i m theta) sin(theta) over [0, pi]."""
    m = int(m)
    if m % 2:
        return 1j * m * np.pi / 2 if abs(m) == 1 else 0j
    return complex(2.0 / (1.0 - m * m))


def _theta_integral_matrix(Q: int) -> np.ndarray:
    k = np.arange(-(Q - 1), Q)
    s = np.add.outer(k, k)
    even = s % 2 == 0
    out = np.zeros(s.shape, dtype=np.complex128)
    out[even] = 2.0 / (1.0 - s[even].astype(np.float64) ** 2)
    out[np.abs(s) == 1] = 1j * s[np.abs(s) == 1] * np.pi / 2
    return out


# ------------------------------------------------------------ Legendre

def legendre_table(Q: int, theta) -> np.ndarray:
    """Values H_q^m(theta, 0) for 0 <= m <= q < Q.

    Returns
    -------
    ndarray, shape (Q, Q, n)
        Entry [q, m] is zero when m > q.
    """
    th = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    x = np.cos(th)
    sx = np.sin(th)
    out = np.zeros((Q, Q, th.size))
    pmm = np.full(th.size, 1.0 / np.sqrt(4.0 * np.pi))
    for m in range(Q):
        if m > 0:
            pmm = pmm * np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * sx
        out[m, m] = pmm
        if m + 1 < Q:
            out[m + 1, m] = np.sqrt(2.0 * m + 3.0) * x * pmm
        for q in range(m + 2, Q):
            a = np.sqrt((4.0 * q * q - 1.0) / (q * q - m * m))
            b = np.sqrt(((q - 1.0) ** 2 - m * m) / (4.0 * (q - 1.0) ** 2 - 1.0))
            out[q, m] = a * (x * out[q - 1, m] - b * out[q - 2, m])
    return out


def sph_harmonic_eval(q: int, m: int, theta, psi):
    """Evaluate H_q^m(theta, psi); broadcasts over theta and psi."""
    q, m = int(q), int(m)
    if q < 0 or abs(m) > q:
        raise InputError(f"need 0 <= |m| <= q, got q={q}, m={m}")
    th, ps = np.broadcast_arrays(np.asarray(theta, dtype=np.float64),
                                 np.asarray(psi, dtype=np.float64))
    leg = legendre_table(q + 1, th.ravel())[q, abs(m)].reshape(th.shape)
    val = leg * np.exp(1j * abs(m) * ps)
    if m < 0:
        val = (-1) ** m * np.conj(val)
    return val[()] if val.ndim == 0 else val


# ------------------------------------------------------------ Wigner table

@dataclass(frozen=True)
class WignerTable:
    """Values d^q_{a,b}(pi/2) for q < Q stored for a, b >= 0.

    Negative orders follow from d_{a,-b} = (-1)^(q+a) d_{a,b} and
    d_{-a,b} = (-1)^(q+b) d_{a,b}.
    """

    Q: int
    data: np.ndarray

    @property
    def offsets(self) -> np.ndarray:
        return kernels.quarter_offsets(self.Q)

    def d(self, q: int, a: int, b: int) -> float:
        if not 0 <= q < self.Q or abs(a) > q or abs(b) > q:
            raise InputError(f"indices out of range: q={q}, a={a}, b={b}")
        sgn = 1.0
        if b < 0:
            sgn *= (-1.0) ** (q + a)
            b = -b
        if a < 0:
            sgn *= (-1.0) ** (q + b)
            a = -a
        off = int(self.offsets[q])
        return sgn * float(self.data[off + a * (q + 1) + b])

    def matrix(self, q: int) -> np.ndarray:
        """Full (2q+1) x (2q+1) matrix indexed by (a+q, b+q)."""
        r = np.arange(-q, q + 1)
        return np.array([[self.d(q, a, b) for b in r] for a in r])


_wig_lock = threading.Lock()
_wig_cache: list[WignerTable] = []


def wigner_table(Q: int) -> WignerTable:
    """Wigner-d values at pi/2 for all degrees below ``Q``; cached."""
    if Q < 1:
        raise InputError("Q must be >= 1")
    with _wig_lock:
        if _wig_cache and _wig_cache[0].Q >= Q:
            big = _wig_cache[0]
        else:
            big = WignerTable(Q, kernels.wigner_quarter(Q))
            big.data.setflags(write=False)
            _wig_cache[:] = [big]
    if big.Q == Q:
        return big
    return WignerTable(Q, big.data[: int(kernels.quarter_offsets(Q)[Q])])


# ------------------------------------------------------------ coefficients

@dataclass(frozen=True)
class SphCoeffs:
    """Complex coefficients; ``values`` has shape (..., Q**2)."""

    Q: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape[-1] != self.Q * self.Q:
            raise InputError(f"expected {self.Q * self.Q} coefficients, got {v.shape[-1]}")
        object.__setattr__(self, "values", v)

    def truncate(self, Q: int) -> "SphCoeffs":
        if Q > self.Q:
            raise InputError(f"cannot truncate Q={self.Q} coefficients at {Q}")
        return SphCoeffs(Q, self.values[..., : Q * Q])


@dataclass(frozen=True)
class RealCoeffs:
    """Real image of :class:`SphCoeffs` under the map A^{-1}."""

    Q: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape[-1] != self.Q * self.Q:
            raise InputError(f"expected {self.Q * self.Q} coefficients, got {v.shape[-1]}")
        object.__setattr__(self, "values", v)


def _pair_indices(Q: int):
    q, m = degree_order(Q)
    pos = np.nonzero(m > 0)[0]
    neg = pos - 2 * m[pos]
    zero = np.nonzero(m == 0)[0]
    sign = 1.0 - 2.0 * (m[pos] % 2)
    return pos, neg, zero, sign


def complex_to_real(coeffs: SphCoeffs) -> RealCoeffs:
    """Apply A^{-1}: s~_q^m = Re-part, s~_q^{-m} = Im-part of s_q^m.

    For a general complex input the map is the linear one
    s~^m = (s^m + (-1)^m s^{-m}) / 2 and s~^{-m} = (s^m - (-1)^m s^{-m}) / (2i).
    """
    Q = coeffs.Q
    v = coeffs.values
    pos, neg, zero, sign = _pair_indices(Q)
    out = np.empty(v.shape, dtype=np.complex128)
    out[..., zero] = v[..., zero]
    out[..., pos] = (v[..., pos] + sign * v[..., neg]) / 2
    out[..., neg] = (v[..., pos] - sign * v[..., neg]) / 2j
    return RealCoeffs(Q, out.real)


def real_to_complex(coeffs: RealCoeffs) -> SphCoeffs:
    """Apply A: s_q^m = s~^m + i s~^{-m}, s_q^{-m} = (-1)^m (s~^m - i s~^{-m})."""
    Q = coeffs.Q
    v = coeffs.values
    pos, neg, zero, sign = _pair_indices(Q)
    out = np.empty(v.shape, dtype=np.complex128)
    out[..., zero] = v[..., zero]
    out[..., pos] = v[..., pos] + 1j * v[..., neg]
    out[..., neg] = sign * (v[..., pos] - 1j * v[..., neg])
    return SphCoeffs(Q, out)


def realification_matrices(Q: int) -> tuple[np.ndarray, np.ndarray]:
    """Dense matrices (A, A^{-1}) with s = A s~ and s~ = A^{-1} s."""
    n = Q * Q
    pos, neg, zero, sign = _pair_indices(Q)
    A = np.zeros((n, n), dtype=np.complex128)
    Ainv = np.zeros((n, n), dtype=np.complex128)
    A[zero, zero] = 1.0
    Ainv[zero, zero] = 1.0
    A[pos, pos] = 1.0
    A[pos, neg] = 1j
    A[neg, pos] = sign
    A[neg, neg] = -1j * sign
    Ainv[pos, pos] = 0.5
    Ainv[pos, neg] = 0.5 * sign
    Ainv[neg, pos] = -0.5j
    Ainv[neg, neg] = 0.5j * sign
    return A, Ainv


def symmetry_residual(coeffs: SphCoeffs) -> np.ndarray:
    """Max |s^{-m} - (-1)^m conj(s^m)| per leading index (m = 0 included)."""
    v = coeffs.values
    pos, neg, zero, sign = _pair_indices(coeffs.Q)
    r0 = np.abs(v[..., zero].imag).max(axis=-1) if zero.size else 0.0
    if pos.size == 0:
        return np.asarray(r0)
    r1 = np.abs(v[..., neg] - sign * np.conj(v[..., pos])).max(axis=-1)
    return np.maximum(r0, r1)


def power_spectrum(coeffs: SphCoeffs) -> np.ndarray:
    """Power per degree, P(q) = sum_m |s_q^m|^2."""
    q, _ = degree_order(coeffs.Q)
    a2 = np.abs(coeffs.values) ** 2
    out = np.zeros(a2.shape[:-1] + (coeffs.Q,))
    for d in range(coeffs.Q):
        out[..., d] = a2[..., q == d].sum(axis=-1)
    return out


def write_coeff_csv(path, coeffs: SphCoeffs) -> None:
    """Debug dump ``q,m,re,im`` sorted by (q, m); single slice only."""
    v = np.asarray(coeffs.values)
    if v.ndim != 1:
        raise InputError("coefficient dump takes a single slice")
    q, m = degree_order(coeffs.Q)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["q", "m", "re", "im"])
        for k in range(v.size):
            w.writerow([int(q[k]), int(m[k]), repr(float(v[k].real)), repr(float(v[k].imag))])


# ------------------------------------------------------------ transform plan

class SHTPlan:
    """Precomputed geometry for transforms of band limit ``Q`` on ``grid``."""

    def __init__(self, grid: GridSpec, Q: int):
        Qmax = max_bandlimit(grid.n_lat, grid.n_lon)
        if not 1 <= Q <= Qmax:
            raise InputError(f"band limit Q={Q} outside [1, {Qmax}] for a "
                             f"{grid.n_lat}x{grid.n_lon} grid")
        self.grid = grid
        self.Q = Q
        self.table = wigner_table(Q).data
        theta = grid.theta
        self.order = np.argsort(theta, kind="stable")
        ts = theta[self.order]
        I = grid.n_lat
        self.uniform = bool(np.allclose(ts, np.pi * np.arange(I) / (I - 1), rtol=0, atol=1e-10))
        k = np.arange(-(Q - 1), Q)
        self.k = k
        if not self.uniform:
            interior = (ts > 1e-12) & (ts < np.pi - 1e-12)
            self.interior = np.nonzero(interior)[0]
            ext = np.concatenate([ts, 2 * np.pi - ts[self.interior]])
            E = np.exp(1j * np.outer(ext, k))
            self.pinv = np.linalg.pinv(E)
        self.imat = _theta_integral_matrix(Q)
        self.synth = np.exp(1j * np.outer(k, theta))       # [k, i], grid order
        psi0 = grid.psi[0]
        m = np.arange(Q)
        self.shift_fwd = np.exp(-1j * m * psi0)
        self.shift_inv = np.exp(1j * m * psi0)
        self.msign = 1.0 - 2.0 * (m % 2)
        self.pos, self.neg, self.zero, self.sign = _pair_indices(Q)
        self.m_of_pos = degree_order(Q)[1][self.pos]
        self.q_of = degree_order(Q)[0]
        self.m_of = degree_order(Q)[1]

    # forward -------------------------------------------------------------
    def colatitude_fourier(self, G: np.ndarray) -> np.ndarray:
        """Fourier coefficients K[n, m, k] of the extended profiles G[n, m, i]."""
        Q = self.Q
        Gs = G[..., self.order]
        if self.uniform:
            I = Gs.shape[-1]
            N = 2 * I - 2
            ext = np.empty(Gs.shape[:-1] + (N,), dtype=np.complex128)
            ext[..., :I] = Gs
            ext[..., I:] = self.msign[:, None] * Gs[..., I - 2: 0: -1]
            F = np.fft.fft(ext, axis=-1) / N
            return F[..., self.k % N]
        ext = np.concatenate([Gs, self.msign[:, None] * Gs[..., self.interior]], axis=-1)
        return ext @ self.pinv.T

    def forward(self, fields: np.ndarray) -> np.ndarray:
        f = np.asarray(fields, dtype=np.float64)
        I, J = self.grid.shape
        if f.shape[-2:] != (I, J):
            raise InputError(f"field shape {f.shape[-2:]} does not match grid {(I, J)}")
        if not np.all(np.isfinite(f)):
            raise InputError("forward_sht input contains non-finite values")
        lead = f.shape[:-2]
        f = f.reshape((-1, I, J))
        Q = self.Q
        F = np.fft.rfft(f, axis=-1)[:, :, :Q]                      # [n, i, m]
        G = (2 * np.pi / J) * F * self.shift_fwd
        G = np.ascontiguousarray(np.swapaxes(G, 1, 2))              # [n, m, i]
        K = self.colatitude_fourier(G)                              # [n, m, k]
        W = np.ascontiguousarray(K @ self.imat)
        S = kernels.sht_analysis(W, self.table, Q)                  # [n, q, m]
        out = np.empty((f.shape[0], Q * Q), dtype=np.complex128)
        out[:, self.zero] = S[:, np.arange(Q), 0].real
        qp = self.q_of[self.pos]
        vals = S[:, qp, self.m_of_pos]
        out[:, self.pos] = vals
        out[:, self.neg] = self.sign * np.conj(vals)
        return out.reshape(lead + (Q * Q,))

    # inverse -------------------------------------------------------------
    def synthesize(self, values: np.ndarray, Q_eff: int | None = None) -> np.ndarray:
        """Real field from conjugate-symmetric coefficients, shape (n, Q*Q)."""
        Q = self.Q
        I, J = self.grid.shape
        n = values.shape[0]
        S = np.zeros((n, Q, Q), dtype=np.complex128)
        q = self.q_of
        m = self.m_of
        keep = m >= 0
        if Q_eff is not None:
            keep &= q < Q_eff
        S[:, q[keep], m[keep]] = values[:, keep]
        K = kernels.sht_synthesis(S, self.table, Q)                # [n, m, k]
        G = K @ self.synth                                          # [n, m, i]
        X = np.zeros((n, I, J // 2 + 1), dtype=np.complex128)
        X[:, :, :Q] = np.swapaxes(G, 1, 2) * self.shift_inv
        return np.fft.irfft(X, n=J, axis=-1) * (J / (2 * np.pi))

    def inverse(self, values: np.ndarray, Q_eff: int | None = None) -> np.ndarray:
        v = np.asarray(values, dtype=np.complex128)
        if v.shape[-1] != self.Q * self.Q:
            raise InputError("coefficient length does not match the plan")
        lead = v.shape[:-1]
        v = v.reshape((-1, self.Q * self.Q))
        sym = np.empty_like(v)
        sym[:, self.zero] = v[:, self.zero].real
        avg = (v[:, self.pos] + self.sign * np.conj(v[:, self.neg])) / 2
        sym[:, self.pos] = avg
        sym[:, self.neg] = self.sign * np.conj(avg)
        anti = v - sym
        if np.abs(anti).max(initial=0.0) > 0:
            resid = np.abs(self.synthesize(-1j * anti, Q_eff)).max()
            if resid > SYMMETRY_TOL:
                raise InputError(f"coefficients are not conjugate-symmetric "
                                 f"(imaginary residual {resid:.3g})")
        out = self.synthesize(sym, Q_eff)
        return out.reshape(lead + self.grid.shape)


@lru_cache(maxsize=16)
def get_plan(grid: GridSpec, Q: int) -> SHTPlan:
    return SHTPlan(grid, Q)


def _grid_for(shape, grid: GridSpec | None) -> GridSpec:
    if grid is not None:
        return grid
    return GridSpec.equiangular(shape[-2], shape[-1])


def forward_sht(field, Q: int, grid: GridSpec | None = None) -> SphCoeffs:
    """Coefficients s_q^m, q < Q, of one or more real fields (..., I, J).

    Without ``grid`` the equiangular grid with pole rows is assumed.
    """
    f = np.asarray(field, dtype=np.float64)
    g = _grid_for(f.shape, grid)
    return SphCoeffs(Q, get_plan(g, Q).forward(f))


def inverse_sht(coeffs: SphCoeffs, grid: GridSpec) -> np.ndarray:
    """Evaluate sum_q sum_m s_q^m H_q^m at every node of ``grid``."""
    return get_plan(grid, coeffs.Q).inverse(coeffs.values)


def inverse_sht_masked(coeffs: SphCoeffs, grid: GridSpec, mask: LandMask,
                       Q_l: int, Q_o: int) -> np.ndarray:
    """Inverse transform truncated at ``Q_l`` on land and ``Q_o`` over ocean."""
    if not (1 <= Q_l <= coeffs.Q and 1 <= Q_o <= coeffs.Q):
        raise InputError(f"truncations ({Q_l}, {Q_o}) exceed available Q={coeffs.Q}")
    mask.check(grid)
    plan = get_plan(grid, coeffs.Q)
    ocean = plan.inverse(coeffs.values, Q_o)
    if Q_l == Q_o or not mask.mask.any():
        return ocean
    land = plan.inverse(coeffs.values, Q_l)
    return np.where(mask.mask, land, ocean)
