"""Single-file bundle container and parameter accounting.

Layout::

    b"SHSG1\\n"                  magic + version line
    uint64 little-endian         header length H
    H bytes                      JSON header (sorted keys, no whitespace)
    zero padding                 to a 64-byte boundary
    sections                     each 64-byte aligned, little-endian

The header lists every section (name, dtype, shape, offset, nbytes) relative
to the start of the payload, plus the SHA-256 of the payload.  Sparse tables
are stored as (row, col, value) triples sorted by (row, col).
"""

from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np

from .errors import InputError
from .grid_core import FORMAT_VERSION, GridSpec, LandMask
from .spectral_model import (ArParams, AxialCov, InnovationCov, NuggetField, TghParams,
                             block_orders, nonzero_counts, order_indices)
from .spectral_model.covariance import _factor
from .trend_fit import TrendParams

MAGIC = FORMAT_VERSION.encode() + b"\n"
ALIGN = 64
_DTYPES = {"f8": "<f8", "i8": "<i8", "u1": "u1"}


def _u_triples(innov: InnovationCov):
    rows, cols, vals = [], [], []
    for m, blk in zip(block_orders(innov.Q), innov.blocks):
        idx = order_indices(innov.Q, m)
        a, b = np.triu_indices(idx.size)
        rows.append(idx[a])
        cols.append(idx[b])
        vals.append(blk[a, b])
    r, c, v = (np.concatenate(x) for x in (rows, cols, vals))
    order = np.lexsort((c, r))
    return r[order], c[order], v[order]


def _u_from_triples(Q: int, rows, cols, vals, perm, repaired: int) -> InnovationCov:
    n = Q * Q
    U = np.zeros((n, n))
    U[rows, cols] = vals
    U[cols, rows] = vals
    blocks = []
    for m in block_orders(Q):
        idx = order_indices(Q, m)
        blocks.append(U[np.ix_(idx, idx)].copy())
    expect = np.concatenate([order_indices(Q, m) for m in block_orders(Q)])
    if not np.array_equal(perm, expect):
        raise InputError("stored block permutation does not match the axial ordering")
    return InnovationCov(Q, blocks, [_factor(b) for b in blocks], perm, repaired)


def _sections(bundle) -> list[tuple[str, np.ndarray]]:
    t = bundle.trend
    out = [
        ("grid.latitudes", bundle.grid.latitudes),
        ("grid.longitudes", bundle.grid.longitudes),
        ("mask", bundle.mask.mask.astype(np.uint8)),
        ("trend.beta0", t.beta0), ("trend.beta1", t.beta1), ("trend.beta2", t.beta2),
        ("trend.rho", t.rho), ("trend.sigma", t.sigma), ("trend.a", t.a), ("trend.b", t.b),
        ("trend.degenerate", t.degenerate.astype(np.uint8)),
        ("nugget.v", bundle.nugget.v),
        ("tgh.omega", bundle.tgh.omega), ("tgh.g", bundle.tgh.g), ("tgh.h", bundle.tgh.h),
        ("tgh.lambda", bundle.tgh.lam), ("tgh.in_sgh", bundle.tgh.in_sgh.astype(np.uint8)),
        ("ar.phi", bundle.ar.phi),
    ]
    for d in range(bundle.axial.n_lags):
        r, c, v = bundle.axial.triples(d)
        out += [(f"axial.lag{d}.row", r), (f"axial.lag{d}.col", c), (f"axial.lag{d}.value", v)]
    r, c, v = _u_triples(bundle.innovation)
    out += [("innovation.row", r), ("innovation.col", c), ("innovation.value", v),
            ("innovation.perm", bundle.innovation.perm)]
    return out


def _code(a: np.ndarray) -> str:
    if a.dtype == np.uint8:
        return "u1"
    if np.issubdtype(a.dtype, np.integer):
        return "i8"
    return "f8"


def bundle_bytes(bundle) -> bytes:
    """Canonical serialization of a bundle."""
    payload = bytearray()
    entries = []
    for name, arr in _sections(bundle):
        code = _code(np.asarray(arr))
        data = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
        pad = (-len(payload)) % ALIGN
        payload += b"\0" * pad
        entries.append({"name": name, "dtype": code, "shape": list(np.shape(arr)),
                        "offset": len(payload), "nbytes": len(data)})
        payload += data
    header = {
        "version": bundle.version, "I": bundle.grid.n_lat, "J": bundle.grid.n_lon,
        "K": bundle.K, "P": bundle.P, "Q_l": bundle.Q_l, "Q_o": bundle.Q_o,
        "resolution": bundle.resolution, "period": bundle.trend.period,
        "rng_scheme": bundle.rng_scheme, "repaired_blocks": int(bundle.innovation.repaired),
        "n_lags": bundle.axial.n_lags, "sections": entries, "start_year": bundle.start_year,
        "payload_nbytes": len(payload), "sha256": hashlib.sha256(payload).hexdigest(),
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    head = MAGIC + struct.pack("<Q", len(hb)) + hb
    head += b"\0" * ((-len(head)) % ALIGN)
    return bytes(head) + bytes(payload)


def save_bundle(bundle, path: str | os.PathLike) -> str:
    """Write the bundle; returns the payload SHA-256."""
    data = bundle_bytes(bundle)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return hashlib.sha256(data).hexdigest()


def read_header(data: bytes) -> tuple[dict, int]:
    """Parse and validate the header; returns (header, payload start)."""
    if len(data) < len(MAGIC) + 8:
        raise InputError("bundle file is truncated")
    if not data.startswith(MAGIC):
        first = data.split(b"\n", 1)[0][:16]
        raise InputError(f"unsupported bundle version {first.decode(errors='replace')!r}, "
                         f"expected {FORMAT_VERSION!r}")
    (hlen,) = struct.unpack("<Q", data[len(MAGIC): len(MAGIC) + 8])
    start = len(MAGIC) + 8
    if start + hlen > len(data):
        raise InputError("bundle file is truncated")
    try:
        header = json.loads(data[start: start + hlen])
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise InputError("bundle header is malformed") from None
    if header.get("version") != FORMAT_VERSION:
        raise InputError(f"unsupported bundle version {header.get('version')!r}")
    off = start + hlen
    off += (-off) % ALIGN
    return header, off


def load_bundle(path: str | os.PathLike):
    """Read a bundle written by :func:`save_bundle`, verifying its hash."""
    from .generator import GeneratorBundle

    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except FileNotFoundError:
        raise InputError(f"missing bundle file {path}") from None
    header, off = read_header(data)
    payload = data[off:]
    if len(payload) != header["payload_nbytes"]:
        raise InputError("bundle file is truncated" if len(payload) < header["payload_nbytes"]
                         else "bundle file has trailing bytes")
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise InputError("bundle hash mismatch: file is corrupted")
    arr = {}
    for e in header["sections"]:
        raw = payload[e["offset"]: e["offset"] + e["nbytes"]]
        a = np.frombuffer(raw, dtype=_DTYPES[e["dtype"]]).reshape(e["shape"])
        arr[e["name"]] = a.astype({"f8": np.float64, "i8": np.int64, "u1": np.uint8}[e["dtype"]])
    K, P = int(header["K"]), int(header["P"])
    Q_l, Q_o = int(header["Q_l"]), int(header["Q_o"])
    Qp = max(Q_l, Q_o)
    grid = GridSpec(arr["grid.latitudes"], arr["grid.longitudes"])
    trend = TrendParams(arr["trend.beta0"], arr["trend.beta1"], arr["trend.beta2"],
                        arr["trend.rho"], arr["trend.sigma"], arr["trend.a"], arr["trend.b"],
                        K, int(header["period"]), arr["trend.degenerate"].astype(bool))
    tgh = TghParams(arr["tgh.omega"], arr["tgh.g"], arr["tgh.h"], arr["tgh.lambda"],
                    arr["tgh.in_sgh"].astype(bool))
    axial = AxialCov.from_triples(Qp, [(arr[f"axial.lag{d}.row"], arr[f"axial.lag{d}.col"],
                                        arr[f"axial.lag{d}.value"])
                                       for d in range(int(header["n_lags"]))])
    innov = _u_from_triples(Qp, arr["innovation.row"], arr["innovation.col"],
                            arr["innovation.value"], arr["innovation.perm"],
                            int(header["repaired_blocks"]))
    return GeneratorBundle(grid=grid, mask=LandMask(arr["mask"].astype(bool)),
                           resolution=header["resolution"], trend=trend,
                           nugget=NuggetField(arr["nugget.v"]), Q_l=Q_l, Q_o=Q_o, tgh=tgh,
                           ar=ArParams(arr["ar.phi"]), axial=axial, innovation=innov,
                           version=header["version"], rng_scheme=header["rng_scheme"],
                           start_year=header.get("start_year"))


def param_count(bundle) -> dict:
    """Memorized-parameter accounting.

    Returns a dict with ``deterministic`` (5+2K)IJ, ``nugget`` IJ, ``tgh``
    4|S_gh|, ``ar`` P Q'^2, ``covariance`` Q'(Q'+1)(Q'+2)/6, ``lag_tables``
    (P-1) times the same count, ``total``, and ``bound``
    (6+2K)IJ + (4+P)Q'^2 + covariance.
    """
    I, J = bundle.grid.shape
    IJ = I * J
    K, P, Qp = bundle.K, bundle.P, bundle.Q
    _, stored = nonzero_counts(Qp)
    out = {
        "deterministic": (5 + 2 * K) * IJ,
        "nugget": IJ,
        "tgh": 4 * int(np.count_nonzero(bundle.tgh.in_sgh)),
        "ar": P * Qp * Qp,
        "covariance": stored,
        "lag_tables": (P - 1) * stored,
    }
    out["total"] = sum(out.values())
    out["bound"] = (6 + 2 * K) * IJ + (4 + P) * Qp * Qp + stored
    return out
