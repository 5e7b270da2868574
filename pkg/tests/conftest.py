import numpy as np
import pytest

from shsg.grid_core import GridSpec
from shsg.sht import RealCoeffs, real_to_complex


def random_sym_coeffs(Q, rng, size=()):
    """Conjugate-symmetric coefficients built from a random real vector."""
    return real_to_complex(RealCoeffs(Q, rng.standard_normal(tuple(size) + (Q * Q,))))


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


@pytest.fixture(scope="session")
def small_grid():
    return GridSpec.equiangular(24, 48)


def simulate_tgh_ar(omega, g, h, phi, T, R, seed):
    """Members y = omega * tau_{g,h}(s) with s a unit-variance AR(1)."""
    from shsg.spectral_model import tgh_forward

    r = np.random.default_rng(seed)
    s = np.empty((R, T))
    s[:, 0] = r.standard_normal(R)
    sd = np.sqrt(1 - phi * phi)
    for t in range(1, T):
        s[:, t] = phi * s[:, t - 1] + sd * r.standard_normal(R)
    return omega * tgh_forward(s, g, h)


def simulate_ar(phi, T, R, N, seed, burn=200):
    """Independent AR(P) series, shape (R, T, N); ``phi`` lists lag coefficients."""
    phi = np.atleast_1d(phi)
    r = np.random.default_rng(seed)
    e = r.standard_normal((R, T + burn, N))
    y = np.zeros_like(e)
    for t in range(T + burn):
        y[:, t] = e[:, t]
        for p, c in enumerate(phi, start=1):
            if t - p >= 0:
                y[:, t] += c * y[:, t - p]
    return y[:, burn:]


@pytest.fixture(scope="session")
def fitted_synthetic(small_grid):
    """Truth bundle, its emulations and the bundle fitted back from them."""
    from shsg.generator import FitConfig, fit_full, generate, synthetic_bundle, synthetic_forcing

    truth = synthetic_bundle(small_grid, 8, 8)
    forcing = synthetic_forcing(200)
    sims = generate(truth, forcing, 7, seed=1)
    bundle, report = fit_full(sims.to_field(), small_grid, truth.mask, forcing,
                              FitConfig(Q_l=None, Q_o=None, P=None))
    return {"truth": truth, "forcing": forcing, "sims": sims, "bundle": bundle, "report": report}


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
