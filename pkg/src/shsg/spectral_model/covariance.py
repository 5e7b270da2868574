"""Axially symmetric coefficient covariance and the innovation covariance U.

Real coefficients are indexed k = q^2 + q + m with signed m; the entry for
m > 0 is the real part of s_q^m and the entry for -m its imaginary part.
Under axial symmetry two real coefficients are correlated only when they
share the same signed order m, and the +m and -m blocks are equal.  A table
therefore stores, per order m >= 0, one symmetric (Q - m) x (Q - m) block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from ..errors import InputError, NumericalError
from ..grid_core import GridSpec, LandMask
from ..sht import legendre_table

PSD_TOL = 1e-6
FLOOR_REL = 1e-10


def nonzero_counts(Q: int) -> tuple[int, int]:
    """(nonzero entries, distinct stored values) of an axial Q^2 x Q^2 table."""
    if Q < 1:
        raise InputError("Q must be >= 1")
    nonzero = (2 * Q ** 3 + Q) // 3
    stored = Q * (Q + 1) * (Q + 2) // 6
    return nonzero, stored


def order_indices(Q: int, m: int) -> np.ndarray:
    """Real indices q^2 + q + m for |m| <= q < Q."""
    q = np.arange(abs(m), Q)
    return q * q + q + m


def block_orders(Q: int) -> list[int]:
    """Signed orders in factor order: 0, 1, -1, 2, -2, ..."""
    out = [0]
    for m in range(1, Q):
        out += [m, -m]
    return out


def admissible_mask(Q: int) -> np.ndarray:
    """Boolean Q^2 x Q^2 pattern of entries an axial table may fill."""
    q = np.arange(Q)
    m = np.concatenate([np.arange(-d, d + 1) for d in q])
    return m[:, None] == m[None, :]


@dataclass
class AxialCov:
    """Axial covariance tables for lags 0..L-1.

    ``blocks[d][m]`` is the symmetric (Q - m) x (Q - m) block of lag ``d``
    for order m >= 0, rows and columns indexed by degree q = m..Q-1.
    """

    Q: int
    blocks: list[list[np.ndarray]]

    def __post_init__(self):
        for lag in self.blocks:
            if len(lag) != self.Q:
                raise InputError("need one block per order m = 0..Q-1")
            for m, b in enumerate(lag):
                if b.shape != (self.Q - m, self.Q - m):
                    raise InputError(f"block m={m} has shape {b.shape}")

    @property
    def n_lags(self) -> int:
        return len(self.blocks)

    def counts(self) -> tuple[int, int]:
        return nonzero_counts(self.Q)

    def block(self, m: int, lag: int = 0) -> np.ndarray:
        return self.blocks[lag][abs(m)]

    def to_dense(self, lag: int = 0) -> np.ndarray:
        Q = self.Q
        K = np.zeros((Q * Q, Q * Q))
        for m in range(-(Q - 1), Q):
            idx = order_indices(Q, m)
            K[np.ix_(idx, idx)] = self.blocks[lag][abs(m)]
        return K

    def triples(self, lag: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stored values as (row, col, value), row <= col, m >= 0, sorted by (row, col)."""
        rows, cols, vals = [], [], []
        for m in range(self.Q):
            idx = order_indices(self.Q, m)
            a, b = np.triu_indices(idx.size)
            rows.append(idx[a])
            cols.append(idx[b])
            vals.append(self.blocks[lag][m][a, b])
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
        order = np.lexsort((c, r))
        return r[order], c[order], v[order]

    @classmethod
    def from_triples(cls, Q: int, lags) -> "AxialCov":
        """Inverse of :meth:`triples`; ``lags`` is a list of (row, col, value)."""
        q_of = np.floor(np.sqrt(np.arange(Q * Q))).astype(int)
        m_of = np.arange(Q * Q) - q_of * q_of - q_of
        blocks = []
        for rows, cols, vals in lags:
            lag = [np.zeros((Q - m, Q - m)) for m in range(Q)]
            for r, c, v in zip(np.asarray(rows), np.asarray(cols), np.asarray(vals)):
                m = m_of[r]
                if m != m_of[c] or m < 0:
                    raise InputError(f"entry ({r}, {c}) outside the axial pattern")
                a, b = q_of[r] - m, q_of[c] - m
                lag[m][a, b] = v
                lag[m][b, a] = v
            blocks.append(lag)
        return cls(Q, blocks)


def empirical_axial_cov(latent, n_lags: int = 1) -> AxialCov:
    """Pooled moment estimate of the axial tables from real latent series.

    Parameters
    ----------
    latent : array_like, shape (R, T, Q**2)
        Latent real coefficients; centred here by the pooled (r, t) mean.
    n_lags : int
        Number of tables (lags 0..n_lags-1).

    Notes
    -----
    Lag 0 averages the +m and -m products over 2RT terms (RT for m = 0).
    Lag d >= 1 pairs s_t with s_{t-d} over R(T-d) terms and is symmetrized.
    """
    s = np.asarray(latent, dtype=np.float64)
    R, T, N = s.shape
    Q = int(round(np.sqrt(N)))
    if Q * Q != N:
        raise InputError("last axis must have Q^2 entries")
    if not 1 <= n_lags < T:
        raise InputError("lag count out of range")
    s = s - s.mean(axis=(0, 1))
    blocks = []
    for d in range(n_lags):
        lag = []
        for m in range(Q):
            idx = order_indices(Q, m)
            a = s[:, d:, idx].reshape(-1, idx.size)
            b = s[:, : T - d, idx].reshape(-1, idx.size)
            acc = a.T @ b
            cnt = a.shape[0]
            if m > 0:
                jdx = order_indices(Q, -m)
                a2 = s[:, d:, jdx].reshape(-1, idx.size)
                b2 = s[:, : T - d, jdx].reshape(-1, idx.size)
                acc = acc + a2.T @ b2
                cnt *= 2
            blk = acc / cnt
            lag.append(0.5 * (blk + blk.T))
        blocks.append(lag)
    return AxialCov(Q, blocks)


def stationary_axial_cov(U: AxialCov, phi: np.ndarray, n_lags: int | None = None) -> AxialCov:
    """Stationary tables of the diagonal VAR driven by axial innovations U.

    ``phi`` has shape (P, Q**2) and must agree on +m and -m.  Lag tables are
    symmetrized to match the estimator in :func:`empirical_axial_cov`.
    """
    phi = np.atleast_2d(np.asarray(phi, dtype=np.float64))
    P = phi.shape[0]
    Q = U.Q
    L = P if n_lags is None else n_lags
    out = [[None] * Q for _ in range(L)]
    for m in range(Q):
        idx = order_indices(Q, m)
        if m > 0 and not np.allclose(phi[:, idx], phi[:, order_indices(Q, -m)]):
            raise InputError("phi must be equal on +m and -m")
        u = U.blocks[0][m]
        f = phi[:, idx]
        n = idx.size
        if P == 1 and L == 1:
            out[0][m] = u / (1.0 - np.outer(f[0], f[0]))
            continue
        A = np.zeros((n * P, n * P))
        for p in range(P):
            A[:n, p * n:(p + 1) * n] = np.diag(f[p])
        A[n:, : n * (P - 1)] += np.eye(n * (P - 1))
        Qm = np.zeros_like(A)
        Qm[:n, :n] = u
        S = solve_discrete_lyapunov(A, Qm)
        # autocovariances beyond the state dimension via the recursion
        gam = [S[:n, p * n:(p + 1) * n] for p in range(P)]
        while len(gam) < L:
            gam.append(sum(np.diag(f[p]) @ gam[len(gam) - 1 - p] for p in range(P)))
        for d in range(L):
            g = gam[d]
            out[d][m] = 0.5 * (g + g.T)
    return AxialCov(Q, out)


@dataclass
class InnovationCov:
    """Innovation covariance U, block-diagonal after grouping by signed order.

    ``perm`` lists real indices in factor order; ``factors[b]`` satisfies
    factors[b] @ factors[b].T = blocks[b] for the b-th signed order of
    :func:`block_orders`.
    """

    Q: int
    blocks: list[np.ndarray]
    factors: list[np.ndarray]
    perm: np.ndarray
    repaired: int = 0
    info: dict = field(default_factory=dict)

    def to_dense(self) -> np.ndarray:
        N = self.Q * self.Q
        U = np.zeros((N, N))
        for m, b in zip(block_orders(self.Q), self.blocks):
            idx = order_indices(self.Q, m)
            U[np.ix_(idx, idx)] = b
        return U

    def factor_dense(self) -> np.ndarray:
        """Block-diagonal factor in permuted order."""
        N = self.Q * self.Q
        L = np.zeros((N, N))
        o = 0
        for f in self.factors:
            n = f.shape[0]
            L[o:o + n, o:o + n] = f
            o += n
        return L

    def sample(self, z: np.ndarray) -> np.ndarray:
        """Map standard normals (..., Q^2), given in factor order, to N(0, U) draws."""
        z = np.asarray(z, dtype=np.float64)
        out = np.empty_like(z)
        o = 0
        for m, f in zip(block_orders(self.Q), self.factors):
            n = f.shape[0]
            out[..., order_indices(self.Q, m)] = z[..., o:o + n] @ f.T
            o += n
        return out


def _factor(b: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(b)
    except np.linalg.LinAlgError:
        # positive semidefinite but singular: symmetric square root
        w, V = np.linalg.eigh(b)
        return V * np.sqrt(np.clip(w, 0.0, None))


def build_innovation(Q: int, blocks: list[np.ndarray]) -> InnovationCov:
    """Repair (eigenvalue floor) and factor per-order blocks of U."""
    total_trace = sum(float(np.trace(b)) for b in blocks)
    floor = FLOOR_REL * total_trace / (Q * Q)
    repaired = 0
    fixed, factors = [], []
    min_ratio = np.inf
    for b in blocks:
        b = 0.5 * (b + b.T)
        w, V = np.linalg.eigh(b)
        top = max(float(w.max()), 0.0)
        if w.min() < -PSD_TOL * top or (top == 0.0 and w.min() < 0):
            raise NumericalError(f"innovation covariance is not positive semidefinite "
                                 f"(min eigenvalue {w.min():.3g}, max {top:.3g})")
        if top > 0:
            min_ratio = min(min_ratio, float(w.min()) / top)
        if w.min() < 0:
            b = (V * np.maximum(w, floor)) @ V.T
            b = 0.5 * (b + b.T)
            repaired += 1
        fixed.append(b)
        factors.append(_factor(b))
    perm = np.concatenate([order_indices(Q, m) for m in block_orders(Q)])
    return InnovationCov(Q, fixed, factors, perm, repaired, {"min_eig_ratio": min_ratio})


def innovation_cov(axial: AxialCov, phi) -> InnovationCov:
    """U = K0 - sum_p F_p K0 F_p - sum_{p != p'} F_p K_{|p-p'|} F_p' on every block.

    Parameters
    ----------
    axial : AxialCov
        Latent tables for lags 0..P-1.
    phi : array_like, shape (P, Q**2)
        Diagonal AR coefficients per real index.
    """
    phi = np.atleast_2d(np.asarray(phi, dtype=np.float64))
    P = phi.shape[0]
    Q = axial.Q
    if phi.shape[1] != Q * Q:
        raise InputError("phi does not match the covariance band limit")
    if axial.n_lags < P:
        raise InputError(f"need lag tables 0..{P - 1}, have {axial.n_lags}")
    blocks = []
    for m in block_orders(Q):
        idx = order_indices(Q, m)
        f = phi[:, idx]
        u = axial.block(m, 0).copy()
        for p in range(P):
            for pp in range(P):
                u -= np.outer(f[p], f[pp]) * axial.block(m, abs(p - pp))
        blocks.append(u)
    return build_innovation(Q, blocks)


# ------------------------------------------------------------ spatial covariance

@dataclass
class NuggetField:
    """Per-cell nugget standard deviation v >= 0."""

    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        if v.ndim != 2 or np.any(v < 0) or not np.all(np.isfinite(v)):
            raise InputError("nugget field must be a finite non-negative (I, J) array")
        self.v = v


def axial_covariance_pairs(axial: AxialCov, grid: GridSpec, cells_a, cells_b,
                           Q_a=None, Q_b=None, nugget: NuggetField | None = None) -> np.ndarray:
    """Model covariance of the standardized field between paired cells.

    c(A, B) = sum_m w_m cos(m dpsi) sum_{q, q'} k_{qq'm} h_q^m(theta_A) h_q'^m(theta_B)
    with w_0 = 1 and w_m = 4 for m >= 1 (real-coefficient tables), sums
    truncated at the band limit of each cell, plus v^2 when A = B.
    """
    a = np.atleast_2d(np.asarray(cells_a, dtype=int))
    b = np.atleast_2d(np.asarray(cells_b, dtype=int))
    n = a.shape[0]
    Q = axial.Q
    Qa = np.broadcast_to(np.asarray(Q if Q_a is None else Q_a), (n,))
    Qb = np.broadcast_to(np.asarray(Q if Q_b is None else Q_b), (n,))
    theta, psi = grid.theta, grid.psi
    Ha = legendre_table(Q, theta[a[:, 0]])       # [q, m, n]
    Hb = legendre_table(Q, theta[b[:, 0]])
    dpsi = psi[a[:, 1]] - psi[b[:, 1]]
    qs = np.arange(Q)
    out = np.zeros(n)
    for m in range(Q):
        ha = Ha[m:, m, :] * (qs[m:, None] < Qa[None, :])
        hb = Hb[m:, m, :] * (qs[m:, None] < Qb[None, :])
        w = 1.0 if m == 0 else 4.0
        out += w * np.cos(m * dpsi) * np.einsum("qn,qk,kn->n", ha, axial.blocks[0][m], hb)
    if nugget is not None:
        same = np.all(a == b, axis=1)
        out[same] += nugget.v[a[same, 0], a[same, 1]] ** 2
    return out


def axial_covariance(axial: AxialCov, nugget: NuggetField | None, grid: GridSpec,
                     cell_a, cell_b, mask: LandMask | None = None,
                     Q_l: int | None = None, Q_o: int | None = None) -> float:
    """Covariance between two cells; with ``mask`` each cell uses its own truncation."""
    Qa = Qb = axial.Q
    if mask is not None:
        Ql = axial.Q if Q_l is None else Q_l
        Qo = axial.Q if Q_o is None else Q_o
        Qa = Ql if mask.mask[cell_a[0], cell_a[1]] else Qo
        Qb = Ql if mask.mask[cell_b[0], cell_b[1]] else Qo
    return float(axial_covariance_pairs(axial, grid, [cell_a], [cell_b], Qa, Qb, nugget)[0])
