"""Fit pipeline and emulation.

:func:`fit_full` runs both fitting stages (trend per cell, then the spectral
model of the standardized residual) and returns a :class:`GeneratorBundle`.
:func:`generate` draws emulation members from a bundle.
"""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._parallel import ordered_map
from .errors import InputError
from .grid_core import (FORMAT_VERSION, EnsembleField, ForcingSeries, GridSpec, LandMask,
                        period_of, write_field)
from .sht import RealCoeffs, SphCoeffs, complex_to_real, forward_sht, get_plan, max_bandlimit, real_to_complex
from .spectral_model import (ArParams, AxialCov, InnovationCov, NuggetField, TghParams,
                             build_innovation, companion_radius, empirical_axial_cov,
                             estimate_nugget, fit_ar_batch, fit_tgh_ar, gaussianity_test,
                             innovation_cov, modal_order, order_indices, select_P, select_Q,
                             stationary_axial_cov)
from .spectral_model.covariance import axial_covariance_pairs, block_orders
from .trend_fit import TrendParams, detrend_rescale, fit_grid_trend, mean_field, trend_bic

RNG_SCHEME = "philox4x64:seedseq(seed,member,role):counter=t"
ROLE_LATENT = 0
ROLE_NUGGET = 1


# ------------------------------------------------------------ configuration

@dataclass
class FitConfig:
    """Fit settings; ``None`` for K, Q_l, Q_o or P requests BIC selection."""

    resolution: str = "annual"
    K: int | None = 0
    Q_l: int | None = None
    Q_o: int | None = None
    P: int | None = 1
    alpha: float = 0.05
    threads: int = 1
    K_candidates: tuple = (0, 1, 2, 3, 4)
    Q_candidates: tuple | None = None
    P_candidates: tuple = (1, 2, 3, 4, 5)

    def q_candidates(self, grid: GridSpec) -> list[int]:
        Qmax = max_bandlimit(grid.n_lat, grid.n_lon)
        if self.Q_candidates is not None:
            c = sorted({int(q) for q in self.Q_candidates})
            if c[0] < 1 or c[-1] > Qmax:
                raise InputError(f"Q candidates must lie in [1, {Qmax}]")
            return c
        return list(range(2, min(Qmax, 20) + 1, 2))


@dataclass
class FitReport:
    """Deterministic summary of a fit (no timings, so it is byte-stable)."""

    K: int
    Q_l: int
    Q_o: int
    P: int
    selection: dict = field(default_factory=dict)
    sgh_size: int = 0
    degenerate_cells: list = field(default_factory=list)
    tgh_fallbacks: int = 0
    nonstationary: int = 0
    repaired_blocks: int = 0

    def to_dict(self) -> dict:
        return {"K": self.K, "Q_l": self.Q_l, "Q_o": self.Q_o, "P": self.P,
                "selection": self.selection, "sgh_size": self.sgh_size,
                "degenerate_cells": self.degenerate_cells,
                "tgh_fallbacks": self.tgh_fallbacks, "nonstationary": self.nonstationary,
                "repaired_blocks": self.repaired_blocks}


# ------------------------------------------------------------ bundle

@dataclass
class GeneratorBundle:
    """Everything emulation needs.

    ``axial`` holds the latent tables for lags 0..P-1; ``innovation`` is U with
    its block factor.  Spectral arrays use the real index q^2 + q + m up to
    Q' = max(Q_l, Q_o).
    """

    grid: GridSpec
    mask: LandMask
    resolution: str
    trend: TrendParams
    nugget: NuggetField
    Q_l: int
    Q_o: int
    tgh: TghParams
    ar: ArParams
    axial: AxialCov
    innovation: InnovationCov
    version: str = FORMAT_VERSION
    rng_scheme: str = RNG_SCHEME
    start_year: int | None = None     # calendar year of t = 1, when known

    def __post_init__(self):
        if self.version != FORMAT_VERSION:
            raise InputError(f"unsupported bundle version {self.version!r}")
        self.mask.check(self.grid)
        Qp = self.Q
        n = Qp * Qp
        if self.trend.shape != self.grid.shape or self.nugget.v.shape != self.grid.shape:
            raise InputError("trend and nugget fields must match the grid")
        if self.ar.phi.shape[1] != n or self.tgh.omega.shape != (n,):
            raise InputError("spectral parameters do not match Q'")
        if self.axial.Q != Qp or self.innovation.Q != Qp or self.axial.n_lags < self.P:
            raise InputError("covariance tables do not match Q' or P")
        if self.trend.period != period_of(self.resolution):
            raise InputError("trend period does not match the resolution")

    @property
    def Q(self) -> int:
        return max(self.Q_l, self.Q_o)

    @property
    def K(self) -> int:
        return self.trend.K

    @property
    def P(self) -> int:
        return self.ar.P

    def fingerprint(self) -> str:
        """SHA-256 over the canonical serialization."""
        from .persistence import bundle_bytes
        return hashlib.sha256(bundle_bytes(self)).hexdigest()


# ------------------------------------------------------------ fit pipeline

def _closure(flags: np.ndarray, Q: int) -> np.ndarray:
    """Close a per-index flag set under m -> -m."""
    out = flags.copy()
    for m in range(1, Q):
        a, b = order_indices(Q, m), order_indices(Q, -m)
        both = out[a] | out[b]
        out[a] = both
        out[b] = both
    return out


def fit_full(field: EnsembleField, grid: GridSpec, mask: LandMask, forcing: ForcingSeries,
             config: FitConfig | None = None, start_year: int | None = None
             ) -> tuple[GeneratorBundle, FitReport]:
    """Fit trend and spectral model to an ensemble.

    Parameters
    ----------
    field : EnsembleField
        Training ensemble, shape (R, T, I, J).
    grid, mask : GridSpec, LandMask
    forcing : ForcingSeries
        Annual forcing covering the T steps.
    config : FitConfig, optional
    start_year : int, optional
        Calendar year of the first step, kept as bundle metadata.

    Returns
    -------
    bundle, report
    """
    cfg = config or FitConfig(resolution=field.resolution)
    if cfg.resolution != field.resolution:
        raise InputError(f"config resolution {cfg.resolution!r} differs from the "
                         f"field's {field.resolution!r}")
    mask.check(grid)
    y = field.data
    if y.shape[2:] != grid.shape:
        raise InputError(f"field grid {y.shape[2:]} does not match {grid.shape}")
    R, T = y.shape[:2]
    if R < 2:
        raise InputError("fitting needs at least two members")
    period = period_of(cfg.resolution)
    forcing.check_covers(T, period)
    selection: dict = {}
    threads = max(1, int(cfg.threads))

    # stage 1: trend per cell
    if cfg.K is None:
        cands = [k for k in cfg.K_candidates if k == 0 or 2 * k < period]
        fits = {k: fit_grid_trend(y, forcing, k, period, threads=threads) for k in cands}
        tot = {k: float(np.sum(trend_bic(f.sigma, k, R * T))) for k, f in fits.items()}
        K = min(cands, key=lambda k: (tot[k], k))
        trend = fits[K]
        selection["K"] = {str(k): v for k, v in tot.items()}
    else:
        K = int(cfg.K)
        trend = fit_grid_trend(y, forcing, K, period, threads=threads)
        selection["K"] = "fixed"
    Z = detrend_rescale(y, trend, forcing)

    # stage 2a: band limits and nugget
    qc = cfg.q_candidates(grid)
    need_sel = cfg.Q_l is None or cfg.Q_o is None
    coeffs_sel = forward_sht(Z, max(qc), grid) if need_sel else None
    Q_l, Q_o = cfg.Q_l, cfg.Q_o
    for name, region in (("Q_l", "land"), ("Q_o", "ocean")):
        if (cfg.Q_l if name == "Q_l" else cfg.Q_o) is not None:
            selection[name] = "fixed"
            continue
        cells = mask.mask if region == "land" else ~mask.mask
        if not cells.any():
            selection[name] = "empty region"
            continue
        best, table = select_Q(Z, grid, mask, region, qc, coeffs=coeffs_sel)
        selection[name] = {str(q): table[q] for q in qc}
        if name == "Q_l":
            Q_l = best
        else:
            Q_o = best
    if Q_l is None and Q_o is None:
        raise InputError("cannot select band limits: both regions empty")
    Q_l = Q_o if Q_l is None else int(Q_l)
    Q_o = Q_l if Q_o is None else int(Q_o)
    Qmax = max_bandlimit(*grid.shape)
    if not (1 <= Q_l <= Qmax and 1 <= Q_o <= Qmax):
        raise InputError(f"band limits ({Q_l}, {Q_o}) outside [1, {Qmax}]")
    Qp = max(Q_l, Q_o)
    coeffs = coeffs_sel.truncate(Qp) if coeffs_sel is not None and coeffs_sel.Q >= Qp \
        else forward_sht(Z, Qp, grid)
    nugget = estimate_nugget(Z, coeffs, grid, mask, Q_l, Q_o)
    real = complex_to_real(coeffs).values                        # (R, T, Q'^2)
    real = real - real.mean(axis=(0, 1))
    n = Qp * Qp

    # stage 2b: Gaussianity screen (skipped for annual data)
    if cfg.resolution == "annual":
        in_sgh = np.zeros(n, dtype=bool)
    else:
        in_sgh = np.array([gaussianity_test(real[:, :, k], cfg.alpha)
                           if np.ptp(real[:, :, k]) > 0 else False for k in range(n)])
        in_sgh = _closure(in_sgh, Qp)
    sgh = np.nonzero(in_sgh)[0]

    # stage 2c: AR order
    if cfg.P is None:
        gauss = np.nonzero(~in_sgh)[0]
        best = np.empty(n, dtype=int)
        if gauss.size:
            best[gauss], tbl = select_P(real[:, :, gauss], cfg.P_candidates)
        if sgh.size:
            best[sgh], _ = select_P(real[:, :, sgh], cfg.P_candidates, use_tgh=True)
        P = modal_order(best, cfg.P_candidates)
        selection["P"] = {str(p): float(np.mean(best == p)) for p in cfg.P_candidates}
    else:
        P = int(cfg.P)
        selection["P"] = "fixed"

    # stage 2d: TGH-AR on S_gh, Gaussian AR elsewhere
    phi = np.zeros((P, n))
    latent = real.copy()
    tgh = TghParams.identity(n)
    fallbacks = 0
    if (~in_sgh).any():
        idx = np.nonzero(~in_sgh)[0]
        phi[:, idx], _, _ = fit_ar_batch(real[:, :, idx], P)
    if sgh.size:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fits = ordered_map(lambda k: fit_tgh_ar(real[:, :, k], P), list(sgh), threads)
        for k, f in zip(sgh, fits):
            phi[:, k] = f.phi
            if f.fallback:
                fallbacks += 1
                in_sgh[k] = False
                continue
            tgh.omega[k], tgh.g[k], tgh.h[k], tgh.lam[k] = f.omega, f.g, f.h, f.lam
            latent[:, :, k] = f.latent
        tgh = TghParams(tgh.omega, tgh.g, tgh.h, tgh.lam, in_sgh)
        latent = latent - latent.mean(axis=(0, 1))
    radius = companion_radius(phi)

    # stage 2e: covariance and innovations
    axial = empirical_axial_cov(latent, n_lags=P)
    innov = innovation_cov(axial, phi)

    bundle = GeneratorBundle(grid=grid, mask=mask, resolution=cfg.resolution, trend=trend,
                             nugget=nugget, Q_l=Q_l, Q_o=Q_o, tgh=tgh, ar=ArParams(phi),
                             axial=axial, innovation=innov, start_year=start_year)
    report = FitReport(K=K, Q_l=Q_l, Q_o=Q_o, P=P, selection=selection,
                       sgh_size=int(in_sgh.sum()),
                       degenerate_cells=[[int(i), int(j)] for i, j in np.argwhere(trend.degenerate)],
                       tgh_fallbacks=fallbacks, nonstationary=int(np.sum(radius >= 1.0)),
                       repaired_blocks=innov.repaired)
    return bundle, report


# ------------------------------------------------------------ emulation

@dataclass
class EmulationSet:
    """Emulated members y[r', t, i, j] with provenance."""

    data: np.ndarray
    resolution: str
    seed: int
    bundle_hash: str
    rng_scheme: str = RNG_SCHEME

    def provenance(self) -> dict:
        return {"version": FORMAT_VERSION, "seed": self.seed, "bundle_sha256": self.bundle_hash,
                "rng_scheme": self.rng_scheme, "members": int(self.data.shape[0])}

    def to_field(self) -> EnsembleField:
        return EnsembleField(self.data, self.resolution)


def _stream(seed: int, member: int, role: int, t: int) -> np.random.Generator:
    """Counter-based generator for one (member, role, step)."""
    ss = np.random.SeedSequence(seed, spawn_key=(member, role))
    key = ss.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, t]))


def latent_paths(bundle: GeneratorBundle, T: int, member: int, seed: int) -> np.ndarray:
    """Latent AR paths s^_t, t = 1..T, for one member, shape (T, Q'^2).

    The P warm-up states are independent N(0, U) draws; step t of the
    recursion uses counter P + t - 1 of the latent stream.
    """
    U = bundle.innovation
    n = bundle.Q ** 2
    P = bundle.P
    phi = bundle.ar.phi
    draws = np.empty((P + T, n))
    for c in range(P + T):
        draws[c] = _stream(seed, member, ROLE_LATENT, c).standard_normal(n)
    xi = U.sample(draws)
    state = np.empty((P + T, n))
    state[:P] = xi[:P][::-1]
    for t in range(P, P + T):
        acc = xi[t].copy()
        for p in range(P):
            acc += phi[p] * state[t - 1 - p]
        state[t] = acc
    return state[P:]


def _member(bundle: GeneratorBundle, mean: np.ndarray, T: int, member: int, seed: int) -> np.ndarray:
    lat = latent_paths(bundle, T, member, seed)
    real = bundle.tgh.forward(lat)
    coeffs = real_to_complex(RealCoeffs(bundle.Q, real))
    plan = get_plan(bundle.grid, bundle.Q)
    field = plan.inverse(coeffs.values, bundle.Q_o)
    if bundle.Q_l != bundle.Q_o and bundle.mask.mask.any():
        land = plan.inverse(coeffs.values, bundle.Q_l)
        field = np.where(bundle.mask.mask, land, field)
    I, J = bundle.grid.shape
    eps = np.empty((T, I, J))
    for t in range(T):
        eps[t] = _stream(seed, member, ROLE_NUGGET, t).standard_normal((I, J))
    return mean + bundle.trend.sigma * (field + bundle.nugget.v * eps)


def generate(bundle: GeneratorBundle, forcing: ForcingSeries, n_members: int, seed: int,
             T: int | None = None, threads: int = 1) -> EmulationSet:
    """Draw ``n_members`` emulations of length ``T``.

    Parameters
    ----------
    bundle : GeneratorBundle
    forcing : ForcingSeries
        Drives the trend; by default T covers every forcing year.
    n_members : int
    seed : int
        Non-negative integer; the only source of randomness.
    T : int, optional
    threads : int
        Members are generated in parallel; output does not depend on it.
    """
    if n_members < 1:
        raise InputError("need at least one member")
    if seed is None or int(seed) < 0:
        raise InputError("seed must be a non-negative integer")
    seed = int(seed)
    period = period_of(bundle.resolution)
    T = forcing.n_years() * period if T is None else int(T)
    if T < 1:
        raise InputError("T must be positive")
    forcing.check_covers(T, period)
    mean = mean_field(bundle.trend, forcing, T)
    members = ordered_map(lambda r: _member(bundle, mean, T, r, seed), list(range(n_members)),
                          threads)
    return EmulationSet(np.stack(members), bundle.resolution, seed, bundle.fingerprint())


def write_emulations(path: str | os.PathLike, emu: EmulationSet, grid: GridSpec,
                     extra: dict | None = None) -> None:
    """Field directory plus ``provenance.json``."""
    write_field(path, emu.to_field(), grid, extra=extra)
    with open(os.path.join(path, "provenance.json"), "w") as fh:
        json.dump(emu.provenance(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def aggregate(emulations, factor: int, resolution: str | None = None) -> EnsembleField:
    """Block means of ``factor`` consecutive steps along t."""
    if isinstance(emulations, EmulationSet):
        y, res = emulations.data, emulations.resolution
    elif isinstance(emulations, EnsembleField):
        y, res = emulations.data, emulations.resolution
    else:
        y, res = np.asarray(emulations, dtype=np.float64), "annual"
    factor = int(factor)
    if factor < 1:
        raise InputError("aggregation factor must be >= 1")
    R, T = y.shape[:2]
    if T % factor:
        raise InputError(f"T={T} is not divisible by {factor}")
    out = y.reshape((R, T // factor, factor) + y.shape[2:]).mean(axis=2)
    if resolution is None:
        resolution = "annual" if factor == period_of(res) else res
    return EnsembleField(out, resolution)


# ------------------------------------------------------------ synthetic truth

def synthetic_mask(grid: GridSpec) -> LandMask:
    """Deterministic two-continent land mask."""
    lat = 90.0 - np.degrees(grid.theta)
    lon = np.degrees(grid.psi) % 360.0
    L, G = np.meshgrid(lat, lon, indexing="ij")
    land = ((L > -35) & (L < 60) & (G >= 10) & (G < 120)) | ((L > 10) & (L < 70) & (G >= 230) & (G < 300))
    return LandMask(land)


def synthetic_forcing(n_years: int, n_history: int = 50) -> ForcingSeries:
    """Smooth increasing forcing with a pre-period history."""
    t = np.arange(-n_history, n_years, dtype=np.float64)
    x = 0.5 + 0.02 * (t + n_history) + 0.1 * np.sin(2 * np.pi * t / 11.0)
    return ForcingSeries(x[n_history:], x[:n_history])


def synthetic_bundle(grid: GridSpec, Q_l: int = 8, Q_o: int = 8, K: int = 0, P: int = 1,
                     resolution: str = "annual", nugget_sd: float = 0.2,
                     mask: LandMask | None = None, tgh: tuple[float, float] | None = None
                     ) -> GeneratorBundle:
    """Hand-built bundle used as ground truth.

    The innovation blocks are axial with a decaying degree spectrum and
    correlation 0.3 between degrees two apart; phi depends on (q, |m|) and
    lies in [0.3, 0.7] (split across lags when P > 1).  The latent covariance
    is the stationary one, scaled so the standardized field has average
    variance 1 - nugget_sd^2.  With ``tgh=(g, h)`` the degree 0 and 1
    coefficients get that transform.
    """
    period = period_of(resolution)
    Qp = max(Q_l, Q_o)
    if Qp > max_bandlimit(*grid.shape):
        raise InputError("band limit too large for the grid")
    if not 0 <= nugget_sd < 1:
        raise InputError("nugget_sd must be in [0, 1)")
    mask = synthetic_mask(grid) if mask is None else mask
    n = Qp * Qp
    q_of = np.floor(np.sqrt(np.arange(n))).astype(int)
    m_of = np.arange(n) - q_of * q_of - q_of
    base = 0.3 + 0.4 * np.mod(0.618 * q_of + 0.414 * np.abs(m_of), 1.0)
    phi = np.zeros((P, n))
    phi[0] = base
    for p in range(1, P):
        phi[p] = -0.1 * base / p
    ublocks = []
    for m in range(Qp):
        q = np.arange(m, Qp)
        var = (1.0 + q) ** -1.5 * (1.0 if m == 0 else 0.5)
        C = np.diag(var)
        off = 0.3 * (-1) ** m * np.sqrt(var[:-2] * var[2:])
        C[np.arange(q.size - 2), np.arange(2, q.size)] = off
        C[np.arange(2, q.size), np.arange(q.size - 2)] = off
        ublocks.append(C)
    U0 = AxialCov(Qp, [ublocks])
    axial = stationary_axial_cov(U0, phi, n_lags=P)
    # scale to the target average variance of the standardized field
    I, J = grid.shape
    cells = np.argwhere(np.ones(grid.shape, dtype=bool))
    Qa = np.where(mask.mask.ravel(), Q_l, Q_o)
    var = axial_covariance_pairs(axial, grid, cells, cells, Qa, Qa)
    scale = (1.0 - nugget_sd ** 2) / float(np.mean(var))
    axial = AxialCov(Qp, [[b * scale for b in lag] for lag in axial.blocks])
    U = AxialCov(Qp, [[b * scale for b in ublocks]])
    innov = build_innovation(Qp, [U.block(m) for m in block_orders(Qp)])

    tg = TghParams.identity(n)
    if tgh is not None:
        g, h = tgh
        sel = q_of <= 1
        sd = np.sqrt(np.diag(axial.to_dense(0)))
        tg = TghParams(np.where(sel, sd, 1.0), np.where(sel, g, 0.0), np.where(sel, h, 0.0),
                       np.where(sel, sd, 1.0), sel)

    lat = np.radians(90.0 - np.degrees(grid.theta))
    LAT = np.repeat(lat[:, None], J, axis=1)
    LON = np.repeat(grid.psi[None, :], I, axis=0)
    beta0 = 10.0 + 15.0 * np.cos(LAT) ** 2
    beta1 = 0.5 + 0.3 * np.sin(LAT)
    beta2 = 0.4 + 0.2 * np.cos(LON) * np.cos(LAT)
    rho = 0.4 + 0.3 * np.cos(LAT) ** 2
    sigma = 1.0 + 0.5 * np.sin(LAT) ** 2 + 0.2 * mask.mask
    a = np.stack([0.8 / (k + 1) * np.cos(LAT) for k in range(K)]) if K else np.zeros((0, I, J))
    b = np.stack([0.3 / (k + 1) * np.sin(LAT) for k in range(K)]) if K else np.zeros((0, I, J))
    trend = TrendParams(beta0, beta1, beta2, rho, sigma, a, b, K, period)
    return GeneratorBundle(grid=grid, mask=mask, resolution=resolution, trend=trend,
                           nugget=NuggetField(np.full(grid.shape, nugget_sd)), Q_l=Q_l, Q_o=Q_o,
                           tgh=tg, ar=ArParams(phi), axial=axial, innovation=innov)
