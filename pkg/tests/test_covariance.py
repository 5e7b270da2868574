import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shsg.errors import NumericalError
from shsg.grid_core import GridSpec, LandMask
from shsg.sht import degree_order, sph_harmonic_eval
from shsg.spectral_model import (AxialCov, NuggetField, admissible_mask, axial_covariance,
                                 axial_covariance_pairs, block_orders, build_innovation,
                                 empirical_axial_cov, innovation_cov, nonzero_counts,
                                 order_indices, stationary_axial_cov)


def enumerate_counts(Q):
    """Brute force over index pairs: same signed order is admissible."""
    idx = [(q, m) for q in range(Q) for m in range(-q, q + 1)]
    nonzero = sum(1 for a, b in itertools.product(idx, idx) if a[1] == b[1])
    # distinct values: m >= 0 (the -m block repeats it) and row <= col
    stored = sum(1 for a, b in itertools.product(idx, idx)
                 if a[1] == b[1] and a[1] >= 0 and a[0] <= b[0])
    return nonzero, stored


def random_axial(Q, rng, n_lags=1, scale=1.0):
    blocks = []
    for _ in range(n_lags):
        lag = []
        for m in range(Q):
            A = rng.standard_normal((Q - m, Q - m))
            lag.append(scale * (A @ A.T + (Q - m) * np.eye(Q - m)) / (Q - m))
        blocks.append(lag)
    return AxialCov(Q, blocks)


def real_basis(Q, theta, psi):
    """B_k with f = sum_k s~_k B_k for real coefficients s~."""
    q, m = degree_order(Q)
    out = np.empty(Q * Q)
    for k in range(Q * Q):
        H = sph_harmonic_eval(q[k], abs(m[k]), theta, psi)
        if m[k] == 0:
            out[k] = H.real
        elif m[k] > 0:
            out[k] = 2 * H.real
        else:
            out[k] = -2 * H.imag
    return out


@pytest.mark.parametrize("Q", range(1, 11))
def test_counts_match_enumeration(Q):
    nz, st_ = nonzero_counts(Q)
    assert (nz, st_) == enumerate_counts(Q)
    assert nz == (2 * Q ** 3 + Q) // 3 and st_ == Q * (Q + 1) * (Q + 2) // 6
    assert admissible_mask(Q).sum() == nz


def test_count_examples():
    assert nonzero_counts(2) == (6, 4)
    assert nonzero_counts(1) == (1, 1)
    assert nonzero_counts(70)[0] == 228690


def test_triples_round_trip(rng):
    ax = random_axial(5, rng, n_lags=2)
    back = AxialCov.from_triples(5, [ax.triples(d) for d in range(2)])
    for d in range(2):
        assert np.array_equal(back.to_dense(d), ax.to_dense(d))
    r, c, v = ax.triples()
    assert r.size == nonzero_counts(5)[1] and np.all(r <= c)
    dense = ax.to_dense()
    assert np.all(dense[~admissible_mask(5)] == 0)


def test_empirical_iid(rng):
    R, T, Q = 7, 400, 4
    s = rng.standard_normal((R, T, Q * Q))
    K = empirical_axial_cov(s).to_dense()
    adm = admissible_mask(Q)
    off = adm & ~np.eye(Q * Q, dtype=bool)
    assert np.all(np.abs(np.diag(K) - 1) < 4 / np.sqrt(R * T))
    assert np.all(np.abs(K[off]) < 4 / np.sqrt(R * T))


def test_innovation_scalar_case():
    ax = AxialCov(1, [[np.array([[2.0]])]])
    U = innovation_cov(ax, np.array([[0.5]]))
    assert U.blocks[0][0, 0] == pytest.approx(1.5, abs=1e-15)


def test_innovation_zero_phi(rng):
    ax = random_axial(4, rng)
    U = innovation_cov(ax, np.zeros((1, 16)))
    assert np.array_equal(U.to_dense(), ax.to_dense())


def test_factor_reconstructs(rng):
    ax = random_axial(6, rng)
    U = innovation_cov(ax, 0.3 * np.ones((1, 36)))
    L = U.factor_dense()
    Ud = U.to_dense()
    assert np.abs(L @ L.T - Ud[np.ix_(U.perm, U.perm)]).max() < 1e-10
    assert np.array_equal(np.sort(U.perm), np.arange(36))


def test_perm_order():
    perm = build_innovation(3, [np.eye(3 - abs(m)) for m in block_orders(3)]).perm
    assert list(perm) == [0, 2, 6, 3, 7, 1, 5, 8, 4]


def test_repair_and_rejection():
    Q = 2
    blocks = [np.eye(2), np.eye(1), np.eye(1)]
    blocks[0] = np.array([[1.0, 1.0], [1.0, 1.0 - 1e-9]])    # tiny negative eigenvalue
    U = build_innovation(Q, blocks)
    assert U.repaired == 1 and np.linalg.eigvalsh(U.blocks[0]).min() > 0
    blocks[0] = np.diag([1.0, -0.5])
    with pytest.raises(NumericalError):
        build_innovation(Q, blocks)


def test_singular_block_factor():
    U = build_innovation(2, [np.ones((2, 2)), np.eye(1), np.eye(1)])
    L = U.factors[0]
    assert np.allclose(L @ L.T, np.ones((2, 2)), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 2))
def test_stationary_inverts_innovation(seed, P):
    r = np.random.default_rng(seed)
    Q = 3
    U0 = random_axial(Q, r)
    phi = np.zeros((P, Q * Q))
    for m in range(Q):
        for p in range(P):
            # per-degree values for P = 1; one value per block for P = 2 keeps
            # the lag tables symmetric so the identity is exact
            v = r.uniform(-0.4, 0.4, Q - m if P == 1 else 1) / P
            phi[p, order_indices(Q, m)] = v
            phi[p, order_indices(Q, -m)] = v
    ax = stationary_axial_cov(U0, phi, n_lags=P)
    U = innovation_cov(ax, phi)
    assert np.abs(U.to_dense() - U0.to_dense()).max() < 1e-9


def test_axial_constant_case(small_grid):
    blocks = [[np.zeros((3 - m, 3 - m)) for m in range(3)]]
    blocks[0][0][0, 0] = 1.0
    ax = AxialCov(3, blocks)
    cells = np.array([[0, 0], [5, 7], [23, 47], [11, 20]])
    for a in cells:
        for b in cells:
            assert axial_covariance(ax, None, small_grid, a, b) == pytest.approx(1 / (4 * np.pi))


def test_nugget_delta(small_grid, rng):
    ax = random_axial(4, rng)
    v = np.zeros(small_grid.shape)
    v[5, 7] = 0.3
    a = axial_covariance(ax, NuggetField(v), small_grid, (5, 7), (5, 7))
    b = axial_covariance(ax, None, small_grid, (5, 7), (5, 7))
    assert a - b == pytest.approx(0.09, abs=1e-14)
    assert (axial_covariance(ax, NuggetField(v), small_grid, (5, 7), (5, 8))
            == axial_covariance(ax, None, small_grid, (5, 7), (5, 8)))


def test_matches_dense_oracle(small_grid, rng):
    Q = 6
    ax = random_axial(Q, rng)
    K = ax.to_dense()
    th, ps = small_grid.theta, small_grid.psi
    for _ in range(10):
        a = (rng.integers(24), rng.integers(48))
        b = (rng.integers(24), rng.integers(48))
        ref = real_basis(Q, th[a[0]], ps[a[1]]) @ K @ real_basis(Q, th[b[0]], ps[b[1]])
        assert axial_covariance(ax, None, small_grid, a, b) == pytest.approx(ref, abs=1e-10)


def test_depends_on_longitude_difference_only(small_grid, rng):
    ax = random_axial(5, rng)
    a = np.array([[3, 4], [3, 10], [3, 40]])
    b = np.array([[9, 10], [9, 16], [9, 46]])
    c = axial_covariance_pairs(ax, small_grid, a, b)
    assert np.allclose(c, c[0], atol=1e-12)
    # sign of the separation does not matter either
    d = axial_covariance_pairs(ax, small_grid, [[3, 10]], [[9, 4]])
    assert d[0] == pytest.approx(c[0], abs=1e-12)


def test_segmented_truncation(small_grid, rng):
    ax = random_axial(6, rng)
    mask = LandMask(np.zeros(small_grid.shape, dtype=bool))
    m = mask.mask.copy()
    m[4, 4] = True
    mask = LandMask(m)
    land = axial_covariance(ax, None, small_grid, (4, 4), (4, 4), mask, 2, 6)
    ref = axial_covariance_pairs(ax, small_grid, [[4, 4]], [[4, 4]], 2, 2)[0]
    assert land == pytest.approx(ref, abs=1e-14)
    ocean = axial_covariance(ax, None, small_grid, (4, 5), (4, 5), mask, 2, 6)
    assert ocean == pytest.approx(axial_covariance(ax, None, small_grid, (4, 5), (4, 5)), abs=1e-14)
