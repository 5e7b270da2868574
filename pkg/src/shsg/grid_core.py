"""Grid geometry, ensemble containers and their on-disk formats.

A field lives in a directory holding ``manifest.json`` and a raw
``data.f64`` payload ordered (r, t, i, j), row-major, little-endian float64.
Land masks are ``I*J`` bytes (1 = land). Forcing is a ``time,value`` CSV.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import InputError

FORMAT_VERSION = "SHSG1"
RESOLUTION_PERIOD = {"annual": 1, "monthly": 12, "daily": 365}


def period_of(resolution: str) -> int:
    try:
        return RESOLUTION_PERIOD[resolution]
    except KeyError:
        raise InputError(f"unknown resolution {resolution!r}") from None


@dataclass(frozen=True)
class GridSpec:
    """Latitude-longitude grid.

    Parameters
    ----------
    latitudes : array_like
        Degrees, strictly increasing, within [-90, 90].
    longitudes : array_like
        Degrees, equally spaced, within [0, 360).
    """

    latitudes: np.ndarray
    longitudes: np.ndarray

    def __post_init__(self):
        lat = np.asarray(self.latitudes, dtype=np.float64).copy()
        lon = np.asarray(self.longitudes, dtype=np.float64).copy()
        if lat.ndim != 1 or lon.ndim != 1 or lat.size < 2 or lon.size < 1:
            raise InputError("latitudes need >= 2 entries and longitudes >= 1")
        if not (np.all(np.isfinite(lat)) and np.all(np.isfinite(lon))):
            raise InputError("grid coordinates must be finite")
        if np.any(np.diff(lat) <= 0) or lat[0] < -90 or lat[-1] > 90:
            raise InputError("latitudes must be strictly increasing within [-90, 90]")
        if lon[0] < 0 or lon[-1] >= 360:
            raise InputError("longitudes must lie in [0, 360)")
        if lon.size > 1:
            step = np.diff(lon)
            if np.any(step <= 0) or np.ptp(step) > 1e-9 * max(1.0, abs(step[0])):
                raise InputError("longitudes must be equally spaced")
            if lon[-1] + step[0] > lon[0] + 360 + 1e-9:
                raise InputError("longitudes overlap after wrapping")
        lat.setflags(write=False)
        lon.setflags(write=False)
        object.__setattr__(self, "latitudes", lat)
        object.__setattr__(self, "longitudes", lon)

    @classmethod
    def equiangular(cls, n_lat: int, n_lon: int) -> "GridSpec":
        """Grid with both pole rows and ``n_lon`` longitudes from 0."""
        return cls(np.linspace(-90.0, 90.0, n_lat), 360.0 * np.arange(n_lon) / n_lon)

    @property
    def n_lat(self) -> int:
        return self.latitudes.size

    @property
    def n_lon(self) -> int:
        return self.longitudes.size

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_lat, self.n_lon)

    @property
    def theta(self) -> np.ndarray:
        """Colatitude in radians, pi/2 - lat."""
        return np.pi / 2 - np.pi * self.latitudes / 180.0

    @property
    def psi(self) -> np.ndarray:
        """Longitude in radians."""
        return np.pi * self.longitudes / 180.0

    def __eq__(self, other):
        if not isinstance(other, GridSpec):
            return NotImplemented
        return (np.array_equal(self.latitudes, other.latitudes)
                and np.array_equal(self.longitudes, other.longitudes))

    def __hash__(self):
        return hash((self.latitudes.tobytes(), self.longitudes.tobytes()))


@dataclass(frozen=True)
class LandMask:
    """Boolean I x J indicator; True marks land."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask).astype(bool, copy=True)
        if m.ndim != 2:
            raise InputError("mask must be two-dimensional")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @classmethod
    def all_ocean(cls, grid: GridSpec) -> "LandMask":
        return cls(np.zeros(grid.shape, dtype=bool))

    @property
    def land(self) -> np.ndarray:
        return self.mask

    @property
    def ocean(self) -> np.ndarray:
        return ~self.mask

    def check(self, grid: GridSpec) -> None:
        if self.mask.shape != grid.shape:
            raise InputError(f"mask shape {self.mask.shape} does not match grid {grid.shape}")


@dataclass(frozen=True)
class EnsembleField:
    """Array y[r, t, i, j] with its temporal resolution."""

    data: np.ndarray
    resolution: str = "annual"
    extra: dict = dc_field(default_factory=dict, compare=False)

    def __post_init__(self):
        y = np.asarray(self.data, dtype=np.float64)
        if y.ndim != 4:
            raise InputError("field data must have shape (R, T, I, J)")
        period_of(self.resolution)
        _check_finite(y)
        object.__setattr__(self, "data", y)

    @property
    def period(self) -> int:
        return period_of(self.resolution)

    @property
    def n_members(self) -> int:
        return self.data.shape[0]

    @property
    def n_steps(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ForcingSeries:
    """Annual forcing values aligned with the first field year.

    Parameters
    ----------
    values : array_like
        x_1, x_2, ... one value per year of the field.
    history : array_like, optional
        Pre-period values in chronological order, so ``history[-1]`` is x_0.
    """

    values: np.ndarray
    history: np.ndarray = dc_field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel().copy()
        h = np.asarray(self.history, dtype=np.float64).ravel().copy()
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(h))):
            raise InputError("forcing values must be finite")
        v.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "history", h)

    def n_years(self) -> int:
        return self.values.size

    def check_covers(self, n_steps: int, period: int) -> None:
        need = -(-n_steps // period)
        if self.values.size < need:
            raise InputError(f"forcing covers {self.values.size} years but {need} are needed")

    def __eq__(self, other):
        if not isinstance(other, ForcingSeries):
            return NotImplemented
        return np.array_equal(self.values, other.values) and np.array_equal(self.history, other.history)


def _check_finite(y: np.ndarray) -> None:
    bad = ~np.isfinite(y)
    if bad.any():
        idx = tuple(int(k) for k in np.argwhere(bad)[0])
        names = ("r", "t", "i", "j") if len(idx) == 4 else tuple(f"d{k}" for k in range(len(idx)))
        where = ", ".join(f"{n}={k}" for n, k in zip(names, idx))
        raise InputError(f"non-finite value at ({where})")


def ensemble_stats(field: EnsembleField | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ensemble mean and population standard deviation over members.

    Returns
    -------
    mean, sd : ndarray
        Shape (T, I, J); ``sd`` uses the 1/R normalisation.
    """
    y = field.data if isinstance(field, EnsembleField) else np.asarray(field, dtype=np.float64)
    if y.shape[0] < 2:
        raise InputError("ensemble statistics need R >= 2")
    mean = y.mean(axis=0)
    sd = np.sqrt(((y - mean) ** 2).mean(axis=0))
    return mean, sd


# ---------------------------------------------------------------- file I/O

def write_field(path: str | os.PathLike, field: EnsembleField, grid: GridSpec,
                extra: dict | None = None) -> None:
    """Write a field directory (manifest + payload)."""
    R, T, I, J = field.data.shape
    if (I, J) != grid.shape:
        raise InputError("field and grid dimensions disagree")
    os.makedirs(path, exist_ok=True)
    manifest = {
        "version": FORMAT_VERSION,
        "I": I, "J": J, "T": T, "R": R,
        "resolution": field.resolution,
        "latitudes": [float(x) for x in grid.latitudes],
        "longitudes": [float(x) for x in grid.longitudes],
    }
    manifest.update(field.extra)
    if extra:
        manifest.update(extra)
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    np.ascontiguousarray(field.data, dtype="<f8").tofile(os.path.join(path, "data.f64"))


_REQUIRED = ("version", "I", "J", "T", "R", "resolution", "latitudes", "longitudes")


def read_field(path: str | os.PathLike) -> tuple[EnsembleField, GridSpec]:
    """Read a field directory written by :func:`write_field`."""
    mpath = os.path.join(path, "manifest.json")
    try:
        with open(mpath) as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"missing manifest {mpath}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed manifest: {exc}") from None
    if not isinstance(manifest, dict):
        raise InputError("malformed manifest: expected an object")
    missing = [k for k in _REQUIRED if k not in manifest]
    if missing:
        raise InputError(f"malformed manifest: missing {missing}")
    if manifest["version"] != FORMAT_VERSION:
        raise InputError(f"unsupported field version {manifest['version']!r}")
    try:
        R, T, I, J = (int(manifest[k]) for k in ("R", "T", "I", "J"))
    except (TypeError, ValueError):
        raise InputError("malformed manifest: dimensions must be integers") from None
    if min(R, T, I, J) < 1:
        raise InputError("malformed manifest: dimensions must be positive")
    lat = np.asarray(manifest["latitudes"], dtype=np.float64)
    lon = np.asarray(manifest["longitudes"], dtype=np.float64)
    if lat.shape != (I,) or lon.shape != (J,):
        raise InputError("malformed manifest: coordinate lengths disagree with I, J")
    grid = GridSpec(lat, lon)
    dpath = os.path.join(path, "data.f64")
    if not os.path.exists(dpath):
        raise InputError(f"missing payload {dpath}")
    raw = np.fromfile(dpath, dtype="<f8")
    if raw.size * 8 != os.path.getsize(dpath) or raw.size != R * T * I * J:
        raise InputError(
            f"payload size mismatch: {os.path.getsize(dpath)} bytes, expected {8 * R * T * I * J}")
    data = raw.reshape(R, T, I, J).astype(np.float64)
    extra = {k: v for k, v in manifest.items() if k not in _REQUIRED}
    return EnsembleField(data, str(manifest["resolution"]), extra), grid


def write_mask(path: str | os.PathLike, mask: LandMask) -> None:
    mask.mask.astype(np.uint8).tofile(path)


def read_mask(path: str | os.PathLike, grid: GridSpec) -> LandMask:
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size != grid.n_lat * grid.n_lon:
        raise InputError(f"mask has {raw.size} bytes, expected {grid.n_lat * grid.n_lon}")
    if np.any(raw > 1):
        raise InputError("mask bytes must be 0 or 1")
    return LandMask(raw.reshape(grid.shape).astype(bool))


def write_forcing(path: str | os.PathLike, forcing: ForcingSeries, start_year: int) -> None:
    h = forcing.history.size
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "value"])
        for k, x in enumerate(forcing.history):
            w.writerow([start_year - h + k, repr(float(x))])
        for k, x in enumerate(forcing.values):
            w.writerow([start_year + k, repr(float(x))])


def read_forcing(path: str | os.PathLike, start_year: float | None = None) -> ForcingSeries:
    """Read a ``time,value`` CSV.

    Rows with ``time < start_year`` become the pre-period history. With no
    ``start_year`` every row is an in-sample value.
    """
    times, vals = [], []
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise InputError(f"missing forcing file {path}") from None
    if not rows or [c.strip().lower() for c in rows[0][:2]] != ["time", "value"]:
        raise InputError("forcing CSV needs a 'time,value' header")
    for n, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            times.append(float(row[0]))
            vals.append(float(row[1]))
        except (ValueError, IndexError):
            raise InputError(f"forcing CSV line {n} is malformed") from None
    times = np.asarray(times)
    vals = np.asarray(vals)
    if times.size == 0:
        raise InputError("forcing CSV has no rows")
    if np.any(np.diff(times) <= 0):
        raise InputError("forcing times must be strictly increasing")
    if start_year is None:
        return ForcingSeries(vals)
    pre = times < start_year
    return ForcingSeries(vals[~pre], vals[pre])
