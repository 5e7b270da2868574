"""Command-line interface: ``shsg synth|fit|emulate|diagnose``.

Exit codes: 0 success, 2 input or contract error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile

from .errors import InputError, NumericalError
from .grid_core import (GridSpec, LandMask, RESOLUTION_PERIOD, period_of, read_field,
                        read_forcing, read_mask, write_forcing, write_mask)
from .generator import (FitConfig, fit_full, generate, synthetic_bundle, synthetic_forcing,
                        synthetic_mask, write_emulations)
from .persistence import load_bundle, param_count, save_bundle

DEFAULT_START_YEAR = 2015


def _auto_int(text: str) -> int | None:
    if text == "auto":
        return None
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'auto', got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("value must be non-negative")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("value must be >= 1")
    return v


def _grid_arg(text: str) -> tuple[int, int]:
    try:
        i, j = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError("grid must look like 24x48") from None
    return i, j


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shsg", description="Spherical-harmonic stochastic generator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--threads", type=_positive, default=1, help="worker threads")

    s = sub.add_parser("synth", help="simulate an ensemble from a hand-built bundle")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--grid", type=_grid_arg, default=(24, 48), help="IxJ (default 24x48)")
    s.add_argument("--q-land", type=_positive, default=8)
    s.add_argument("--q-ocean", type=_positive, default=8)
    s.add_argument("--harmonics", type=int, default=0, help="K")
    s.add_argument("--ar-order", type=_positive, default=1, help="P")
    s.add_argument("--resolution", choices=sorted(RESOLUTION_PERIOD), default="annual")
    s.add_argument("--steps", type=_positive, default=200, help="T")
    s.add_argument("--members", type=_positive, default=7, help="R")
    s.add_argument("--nugget", type=float, default=0.2, help="nugget standard deviation")
    s.add_argument("--tgh", default=None, help="g,h applied to degrees 0 and 1")
    s.add_argument("--all-ocean", action="store_true", help="use an all-ocean mask")
    s.add_argument("--seed", type=int, required=True)
    common(s)

    f = sub.add_parser("fit", help="fit a generator bundle")
    f.add_argument("--input", required=True, help="field directory")
    f.add_argument("--mask", required=True, help="land mask file")
    f.add_argument("--forcing", required=True, help="forcing CSV")
    f.add_argument("--out", required=True, help="output directory")
    f.add_argument("--resolution", choices=sorted(RESOLUTION_PERIOD), default=None)
    f.add_argument("--harmonics", type=_auto_int, default=0, help="K or auto")
    f.add_argument("--q-land", type=_auto_int, default=None, help="Q_l or auto")
    f.add_argument("--q-ocean", type=_auto_int, default=None, help="Q_o or auto")
    f.add_argument("--ar-order", type=_auto_int, default=1, help="P or auto")
    f.add_argument("--alpha", type=float, default=0.05, help="Gaussianity test level")
    f.add_argument("--start-year", type=int, default=None)
    common(f)

    e = sub.add_parser("emulate", help="draw emulations from a bundle")
    e.add_argument("--bundle", required=True)
    e.add_argument("--forcing", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--members", type=_positive, required=True, help="R'")
    e.add_argument("--seed", type=int, required=True)
    e.add_argument("--steps", type=_positive, default=None, help="T (default: all forcing years)")
    e.add_argument("--start-year", type=int, default=None)
    common(e)

    d = sub.add_parser("diagnose", help="compare emulations with simulations")
    d.add_argument("--input", required=True, help="simulation field directory")
    d.add_argument("--emulations", required=True, help="emulation field directory")
    d.add_argument("--out", required=True)
    d.add_argument("--bundle", default=None)
    d.add_argument("--forcing", default=None)
    d.add_argument("--start-year", type=int, default=None)
    common(d)
    return p


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _start_year(explicit, *sources) -> int | None:
    if explicit is not None:
        return explicit
    for s in sources:
        if s is not None:
            return int(s)
    return None


def cmd_synth(a) -> int:
    I, J = a.grid
    grid = GridSpec.equiangular(I, J)
    tgh = None
    if a.tgh:
        try:
            g, h = (float(x) for x in a.tgh.split(","))
        except ValueError:
            raise InputError("--tgh expects g,h") from None
        if h < 0:
            raise InputError("h must be non-negative")
        tgh = (g, h)
    if a.seed < 0:
        raise InputError("seed must be non-negative")
    mask = LandMask.all_ocean(grid) if a.all_ocean else synthetic_mask(grid)
    period = period_of(a.resolution)
    bundle = synthetic_bundle(grid, a.q_land, a.q_ocean, K=a.harmonics, P=a.ar_order,
                              resolution=a.resolution, nugget_sd=a.nugget, mask=mask, tgh=tgh)
    bundle.start_year = DEFAULT_START_YEAR
    forcing = synthetic_forcing(-(-a.steps // period))
    emu = generate(bundle, forcing, a.members, a.seed, T=a.steps, threads=a.threads)
    os.makedirs(a.out, exist_ok=True)
    write_emulations(os.path.join(a.out, "field"), emu, grid,
                     extra={"start_year": DEFAULT_START_YEAR})
    write_mask(os.path.join(a.out, "mask.bin"), mask)
    write_forcing(os.path.join(a.out, "forcing.csv"), forcing, DEFAULT_START_YEAR)
    save_bundle(bundle, os.path.join(a.out, "truth.shsg"))
    print(f"wrote {a.members} members x {a.steps} steps on {I}x{J} to {a.out}")
    return 0


def cmd_fit(a) -> int:
    field, grid = read_field(a.input)
    if a.resolution is not None and a.resolution != field.resolution:
        raise InputError(f"--resolution {a.resolution} differs from the field's {field.resolution}")
    mask = read_mask(a.mask, grid)
    start = _start_year(a.start_year, field.extra.get("start_year"))
    forcing = read_forcing(a.forcing, start)
    cfg = FitConfig(resolution=field.resolution, K=a.harmonics, Q_l=a.q_land, Q_o=a.q_ocean,
                    P=a.ar_order, alpha=a.alpha, threads=a.threads)
    if cfg.P == 0:
        raise InputError("AR order must be >= 1")
    bundle, report = fit_full(field, grid, mask, forcing, cfg, start_year=start)
    info = report.to_dict()
    info["param_count"] = param_count(bundle)
    # write into a scratch directory first so failures leave no bundle behind
    os.makedirs(a.out, exist_ok=True)
    tmp = tempfile.mkdtemp(dir=a.out)
    try:
        save_bundle(bundle, os.path.join(tmp, "bundle.shsg"))
        _write_json(os.path.join(tmp, "fit_report.json"), info)
        for name in ("bundle.shsg", "fit_report.json"):
            os.replace(os.path.join(tmp, name), os.path.join(a.out, name))
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    print(f"K={report.K} Q_l={report.Q_l} Q_o={report.Q_o} P={report.P} "
          f"S_gh={report.sgh_size} -> {os.path.join(a.out, 'bundle.shsg')}")
    return 0


def cmd_emulate(a) -> int:
    bundle = load_bundle(a.bundle)
    if a.seed < 0:
        raise InputError("seed must be non-negative")
    forcing = read_forcing(a.forcing, _start_year(a.start_year, bundle.start_year))
    emu = generate(bundle, forcing, a.members, a.seed, T=a.steps, threads=a.threads)
    extra = {"seed": a.seed}
    if bundle.start_year is not None:
        extra["start_year"] = bundle.start_year
    write_emulations(a.out, emu, bundle.grid, extra=extra)
    print(f"wrote {a.members} members x {emu.data.shape[1]} steps to {a.out}")
    return 0


def cmd_diagnose(a) -> int:
    from .diagnostics import compute_diagnostics

    sims, grid = read_field(a.input)
    emus, grid_e = read_field(a.emulations)
    if grid != grid_e:
        raise InputError("simulation and emulation grids differ")
    if sims.data.shape[1:] != emus.data.shape[1:]:
        raise InputError("simulation and emulation lengths differ")
    bundle = forcing = None
    if a.bundle:
        bundle = load_bundle(a.bundle)
        if a.forcing is None:
            raise InputError("--bundle needs --forcing")
        forcing = read_forcing(a.forcing, _start_year(a.start_year, sims.extra.get("start_year"),
                                                      bundle.start_year))
    report = compute_diagnostics(sims, emus, bundle, forcing, threads=a.threads)
    report.write(a.out)
    for k, v in report.summary().items():
        print(f"{k}: {v:.6g}")
    return 0


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "emulate": cmd_emulate, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
