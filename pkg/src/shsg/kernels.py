"""Hot loops, each in a numba flavour (``*_jit``) and a numpy flavour (``*_np``).

Public names at the bottom bind to one flavour according to
:data:`shsg._accel.USE_NUMBA`. Tests exercise both flavours directly.
"""
from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, try_jit

TWO_PI = 2.0 * np.pi
_IPOW = np.array([1.0, 1.0j, -1.0, -1.0j])


def ipow(m) -> np.ndarray:
    """Exact i**m for integer arrays."""
    return _IPOW[np.asarray(m) % 4]


def quarter_offsets(Q: int) -> np.ndarray:
    """Start of degree q in the flat quarter Wigner table: sum of (l+1)^2, l < q."""
    q = np.arange(Q + 1, dtype=np.int64)
    return q * (q + 1) * (2 * q + 1) // 6


# ------------------------------------------------------------ Wigner d(pi/2)
#
# Entry d^q_{a,b}(pi/2) for 0 <= a, b <= q is stored at off[q] + a*(q+1) + b.
# Degree q is seeded from degree q-1 along the edge a = q and completed by a
# downward three-term recursion in a for each column b <= a; the upper
# triangle follows from d_{a,b} = (-1)^(a-b) d_{b,a}.

@try_jit
def _wigner_quarter_jit(Q):
    total = Q * (Q + 1) * (2 * Q + 1) // 6
    out = np.zeros(total)
    out[0] = 1.0
    prev = 0
    off = 0
    for l in range(Q):
        size = l + 1
        if l > 0:
            psz = l
            out[off + l * size] = -np.sqrt((2.0 * l - 1.0) / (2.0 * l)) * out[prev + (l - 1) * psz]
            for b in range(1, l + 1):
                out[off + l * size + b] = np.sqrt(
                    l * (2.0 * l - 1.0) / (2.0 * (l + b) * (l + b - 1.0))
                ) * out[prev + (l - 1) * psz + b - 1]
            for b in range(l + 1):
                a = l - 1
                if a >= b:
                    out[off + a * size + b] = (
                        2.0 * b / np.sqrt((l - a) * (l + a + 1.0)) * out[off + (a + 1) * size + b]
                    )
                for a in range(l - 2, b - 1, -1):
                    t1 = 2.0 * b / np.sqrt((l - a) * (l + a + 1.0))
                    t2 = np.sqrt((l - a - 1.0) * (l + a + 2.0) / ((l - a) * (l + a + 1.0)))
                    out[off + a * size + b] = (
                        t1 * out[off + (a + 1) * size + b] - t2 * out[off + (a + 2) * size + b]
                    )
        for a in range(size):
            for b in range(a + 1, size):
                sgn = 1.0 if (b - a) % 2 == 0 else -1.0
                out[off + a * size + b] = sgn * out[off + b * size + a]
        prev = off
        off += size * size
    return out


def _wigner_quarter_np(Q):
    offs = quarter_offsets(Q)
    out = np.zeros(int(offs[-1]))
    out[0] = 1.0
    prev = np.ones((1, 1))
    for l in range(1, Q):
        size = l + 1
        D = np.zeros((size, size))
        D[l, 0] = -np.sqrt((2.0 * l - 1.0) / (2.0 * l)) * prev[l - 1, 0]
        b = np.arange(1, l + 1)
        D[l, 1:] = np.sqrt(l * (2.0 * l - 1.0) / (2.0 * (l + b) * (l + b - 1.0))) * prev[l - 1, :l]
        cols = np.arange(size, dtype=np.float64)
        for a in range(l - 1, -1, -1):
            t1 = 2.0 * cols[: a + 1] / np.sqrt((l - a) * (l + a + 1.0))
            row = t1 * D[a + 1, : a + 1]
            if a <= l - 2:
                t2 = np.sqrt((l - a - 1.0) * (l + a + 2.0) / ((l - a) * (l + a + 1.0)))
                row = row - t2 * D[a + 2, : a + 1]
            D[a, : a + 1] = row
        low = np.tril(D)
        parity = 1.0 - 2.0 * (np.add.outer(np.arange(size), np.arange(size)) % 2)
        D = low + np.triu(parity * low.T, 1)
        out[offs[l]: offs[l + 1]] = D.ravel()
        prev = D
    return out


# ------------------------------------------------------------ SHT assembly
#
# W[n, m, c + k] holds sum_k'' K_{m,k''} I(k'' + k) for m >= 0 and
# |k| <= Q-1 (c = Q-1). The output is s_q^m for 0 <= m <= q < Q.

@try_jit
def _ipow_re(m):
    r = m % 4
    if r == 0:
        return 1.0, 0.0
    if r == 1:
        return 0.0, 1.0
    if r == 2:
        return -1.0, 0.0
    return 0.0, -1.0


@try_jit
def _sht_analysis_jit(W, tab, Q):
    n = W.shape[0]
    c = Q - 1
    out = np.zeros((n, Q, Q), dtype=np.complex128)
    wk = np.zeros(Q)
    for q in range(Q):
        off = q * (q + 1) * (2 * q + 1) // 6
        size = q + 1
        nq = np.sqrt((2.0 * q + 1.0) / (4.0 * np.pi))
        k0 = q % 2
        for m in range(q + 1):
            sgn = 1.0 if m % 2 == 0 else -1.0
            pr, pi = _ipow_re(m)
            ph = complex(pr, pi)
            for k in range(k0, q + 1, 2):
                wk[k] = nq * tab[off + k * size] * tab[off + k * size + m]
            for r in range(n):
                acc = 0j
                for k in range(k0, q + 1, 2):
                    if k == 0:
                        acc += wk[k] * W[r, m, c]
                    else:
                        acc += wk[k] * (W[r, m, c + k] + sgn * W[r, m, c - k])
                out[r, q, m] = ph * acc
    return out


def _sht_analysis_np(W, tab, Q):
    n = W.shape[0]
    c = Q - 1
    offs = quarter_offsets(Q)
    out = np.zeros((n, Q, Q), dtype=np.complex128)
    msign = 1.0 - 2.0 * (np.arange(Q) % 2)
    phase = ipow(np.arange(Q))
    for q in range(Q):
        size = q + 1
        D = tab[offs[q]: offs[q + 1]].reshape(size, size)
        nq = np.sqrt((2.0 * q + 1.0) / (4.0 * np.pi))
        wk = nq * D[:, :1] * D            # [k, m]
        wk[(q + np.arange(size)) % 2 == 1] = 0.0
        pos = W[:, :size, c: c + size]    # k = 0..q
        neg = W[:, :size, c - np.arange(size)]
        V = pos + msign[None, :size, None] * neg
        V[:, :, 0] = W[:, :size, c]
        out[:, q, :size] = phase[:size] * np.einsum("km,nmk->nm", wk, V)
    return out


@try_jit
def _sht_synthesis_jit(S, tab, Q):
    n = S.shape[0]
    c = Q - 1
    K = np.zeros((n, Q, 2 * Q - 1), dtype=np.complex128)
    for q in range(Q):
        off = q * (q + 1) * (2 * q + 1) // 6
        size = q + 1
        nq = 2.0 * np.pi * np.sqrt((2.0 * q + 1.0) / (4.0 * np.pi))
        k0 = q % 2
        for m in range(q + 1):
            sgn = 1.0 if m % 2 == 0 else -1.0
            for k in range(k0, q + 1, 2):
                w = nq * tab[off + k * size] * tab[off + k * size + m]
                for r in range(n):
                    v = w * S[r, q, m]
                    K[r, m, c + k] += v
                    if k > 0:
                        K[r, m, c - k] += sgn * v
    for m in range(Q):
        pr, pi = _ipow_re(m)
        ph = complex(pr, pi)
        for r in range(n):
            for k in range(2 * Q - 1):
                K[r, m, k] *= ph
    return K


def _sht_synthesis_np(S, tab, Q):
    n = S.shape[0]
    c = Q - 1
    offs = quarter_offsets(Q)
    K = np.zeros((n, Q, 2 * Q - 1), dtype=np.complex128)
    msign = 1.0 - 2.0 * (np.arange(Q) % 2)
    for q in range(Q):
        size = q + 1
        D = tab[offs[q]: offs[q + 1]].reshape(size, size)
        nq = TWO_PI * np.sqrt((2.0 * q + 1.0) / (4.0 * np.pi))
        wk = nq * D[:, :1] * D
        wk[(q + np.arange(size)) % 2 == 1] = 0.0
        contrib = S[:, q, :size, None] * wk.T[None]      # [n, m, k]
        K[:, :size, c: c + size] += contrib
        K[:, :size, c - np.arange(1, size)] += msign[None, :size, None] * contrib[:, :, 1:]
    K *= ipow(np.arange(Q))[None, :, None]
    return K


# ------------------------------------------------------------ distributed lag
#
# L[n+1] = (1 - rho) x[n] + rho L[n], L[0] = 0, one column per decay rate.

@try_jit
def _lag_recursion_jit(x, rho):
    n = x.shape[0]
    c = rho.shape[0]
    out = np.zeros((n, c))
    for j in range(c):
        r = rho[j]
        acc = 0.0
        for i in range(n):
            out[i, j] = acc
            acc = (1.0 - r) * x[i] + r * acc
    return out


def _lag_recursion_np(x, rho):
    out = np.zeros((x.shape[0], rho.shape[0]))
    acc = np.zeros(rho.shape[0])
    for i in range(x.shape[0]):
        out[i] = acc
        acc = (1.0 - rho) * x[i] + rho * acc
    return out


# ------------------------------------------------------------ Tukey g-and-h
#
# tau(s) = expm1(g s)/g * exp(h s^2/2), strictly increasing for h >= 0.
# The inverse brackets the root in [-S, S] (S = 64) and runs Newton on
# asinh(tau), which is close to quadratic in the tails, falling back to
# bisection whenever a step leaves the bracket.
# Targets outside tau([-S, S]) map to -inf / +inf.

TGH_SPAN = 64.0


@try_jit
def _tau_scalar(s, g, h):
    if g == 0.0:
        base = s
    else:
        base = np.expm1(g * s) / g
    return base * np.exp(0.5 * h * s * s)


@try_jit
def _dtau_scalar(s, g, h):
    e = np.exp(0.5 * h * s * s)
    if g == 0.0:
        return e * (1.0 + h * s * s)
    return e * (np.exp(g * s) + h * s * np.expm1(g * s) / g)


@try_jit
def _tgh_inverse_jit(y, g, h):
    n = y.shape[0]
    out = np.empty(n)
    ylo = _tau_scalar(-TGH_SPAN, g, h)
    yhi = _tau_scalar(TGH_SPAN, g, h)
    for i in range(n):
        t = y[i]
        if t <= ylo:
            out[i] = -np.inf if t < ylo else -TGH_SPAN
            continue
        if t >= yhi:
            out[i] = np.inf if t > yhi else TGH_SPAN
            continue
        lo = -TGH_SPAN
        hi = TGH_SPAN
        s = t if np.abs(t) < 4.0 else (4.0 if t > 0 else -4.0)
        at = np.arcsinh(t)
        for it in range(200):
            v = _tau_scalar(s, g, h)
            f = np.arcsinh(v) - at
            if f > 0:
                hi = s
            elif f < 0:
                lo = s
            else:
                break
            d = _dtau_scalar(s, g, h) / np.hypot(1.0, v)
            if d > 0 and np.isfinite(d):
                sn = s - f / d
                if np.abs(sn - s) <= 1e-15 * (1.0 + np.abs(s)):
                    s = sn
                    break
                if not (sn >= lo and sn <= hi):
                    sn = 0.5 * (lo + hi)
            else:
                sn = 0.5 * (lo + hi)
            if hi - lo <= 1e-15 * (1.0 + np.abs(s)):
                s = sn
                break
            s = sn
        out[i] = s
    return out


def _tau_np(s, g, h):
    base = s if g == 0.0 else np.expm1(g * s) / g
    return base * np.exp(0.5 * h * s * s)


def _dtau_np(s, g, h):
    e = np.exp(0.5 * h * s * s)
    if g == 0.0:
        return e * (1.0 + h * s * s)
    return e * (np.exp(g * s) + h * s * np.expm1(g * s) / g)


def _tgh_inverse_np(y, g, h):
    y = np.asarray(y, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        ylo = _tau_np(-TGH_SPAN, g, h)
        yhi = _tau_np(TGH_SPAN, g, h)
    out = np.empty_like(y)
    below = y <= ylo
    above = y >= yhi
    out[below] = np.where(y[below] < ylo, -np.inf, -TGH_SPAN)
    out[above] = np.where(y[above] > yhi, np.inf, TGH_SPAN)
    inside = ~(below | above)
    t = y[inside]
    lo = np.full(t.shape, -TGH_SPAN)
    hi = np.full(t.shape, TGH_SPAN)
    s = np.clip(t, -4.0, 4.0)
    conv = np.zeros(t.shape, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        at = np.arcsinh(t)
        for _ in range(200):
            v = _tau_np(s, g, h)
            f = np.arcsinh(v) - at
            hi = np.where(f > 0, s, hi)
            lo = np.where(f < 0, s, lo)
            d = _dtau_np(s, g, h) / np.hypot(1.0, v)
            ok = (d > 0) & np.isfinite(d)
            sn = s - f / np.where(ok, d, 1.0)
            done = ok & (np.abs(sn - s) <= 1e-15 * (1.0 + np.abs(s)))
            bad = ~ok | ~((sn >= lo) & (sn <= hi))
            sn = np.where(done, sn, np.where(bad, 0.5 * (lo + hi), sn))
            done |= hi - lo <= 1e-15 * (1.0 + np.abs(s))
            s = np.where(conv, s, sn)
            conv |= done
            if np.all(conv):
                break
    out[inside] = s
    return out


# ------------------------------------------------------------ band depth
#
# Modified band depth with bands of two curves.  At each time the number of
# pairs whose band contains curve i is C(n,2) - C(below,2) - C(above,2),
# with strict inequalities, so ties count as inside.

@try_jit
def _mbd_jit(x):
    C, n, T = x.shape
    out = np.zeros((C, n))
    pairs = n * (n - 1) / 2.0
    for c in range(C):
        for i in range(n):
            acc = 0.0
            for t in range(T):
                v = x[c, i, t]
                below = 0
                above = 0
                for j in range(n):
                    w = x[c, j, t]
                    if w < v:
                        below += 1
                    elif w > v:
                        above += 1
                acc += pairs - below * (below - 1) / 2.0 - above * (above - 1) / 2.0
            out[c, i] = acc / (T * pairs)
    return out


def _mbd_np(x):
    C, n, T = x.shape
    pairs = n * (n - 1) / 2.0
    v = x[:, :, None, :]
    w = x[:, None, :, :]
    below = (w < v).sum(axis=2).astype(np.float64)
    above = (w > v).sum(axis=2).astype(np.float64)
    cnt = pairs - below * (below - 1) / 2.0 - above * (above - 1) / 2.0
    return cnt.sum(axis=2) / (T * pairs)


# ------------------------------------------------------------ dispatch

if USE_NUMBA:
    wigner_quarter = _wigner_quarter_jit
    sht_analysis = _sht_analysis_jit
    sht_synthesis = _sht_synthesis_jit
    lag_recursion = _lag_recursion_jit
    tgh_inverse = _tgh_inverse_jit
    mbd = _mbd_jit
else:
    wigner_quarter = _wigner_quarter_np
    sht_analysis = _sht_analysis_np
    sht_synthesis = _sht_synthesis_np
    lag_recursion = _lag_recursion_np
    tgh_inverse = _tgh_inverse_np
    mbd = _mbd_np
