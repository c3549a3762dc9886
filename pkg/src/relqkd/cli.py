"""
Command-line front end.

Subcommands: ``run``, ``sweep``, ``keyrate``, ``beam``, ``prng-dump`` and
``calibrate``. Exit codes: 0 ok, 2 invalid config or arguments, 3 causality
abort, 4 calibration failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from dataclasses import replace
from typing import Sequence

import yaml

from relqkd import __version__
from relqkd.config import ExperimentConfig, load_config
from relqkd.errors import CalibrationError, CausalityViolation, ConfigError, DomainError
from relqkd.experiment import (
    keyrate_row,
    parse_range,
    run_experiment,
    summarize,
    sweep,
    sweep_csv,
    write_outputs,
)
from relqkd.photonics import BeamDesign, beam_channel_length, max_beam_length
from relqkd.prng import LfsrState, generate_bits
from relqkd.protocol import calibrate

log = logging.getLogger("relqkd")

EXIT_OK, EXIT_CONFIG, EXIT_CAUSALITY, EXIT_CALIBRATION = 0, 2, 3, 4


def _experiment(args: argparse.Namespace) -> ExperimentConfig:
    exp = load_config(args.config)
    if getattr(args, "series", None) is not None:
        exp = exp.with_value("series.count", args.series)
    if getattr(args, "seed", None) is not None:
        exp = exp.with_value("series.seed", args.seed)
    if getattr(args, "attack", None) is not None:
        raw = exp.to_dict()
        raw["attack"] = {"name": args.attack, "params": raw["attack"]["params"] if raw["attack"]["name"] == args.attack else {}}
        exp = ExperimentConfig.from_dict(raw)
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        if key.startswith("attack.params."):
            raw = exp.to_dict()
            raw["attack"]["params"][key.split(".", 2)[2]] = yaml.safe_load(value)
            exp = ExperimentConfig.from_dict(raw)
        else:
            exp = exp.with_value(key, value)
    return exp


def cmd_run(args: argparse.Namespace) -> int:
    exp = _experiment(args)
    reports = run_experiment(exp, args.workers)
    out = args.out or exp.data["output"]["dir"]
    if out:
        formats = [args.format] if args.format else exp.data["output"]["formats"]
        for p in write_outputs(reports, out, formats):
            log.info("wrote %s", p)
    print(summarize(reports).digest())
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    exp = _experiment(args)
    rows = sweep(exp, args.parameter, parse_range(args.range), args.workers)
    text = sweep_csv(args.parameter, rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _values(text: str) -> list[float]:
    return parse_range(text) if ("," in text or ":" in text) else [float(text)]


def cmd_keyrate(args: argparse.Namespace) -> int:
    grids = {"mu": _values(args.mu), "phi_deg": _values(args.phi), "p_e": _values(args.pe), "eta": _values(args.eta)}
    ranged = [k for k, v in grids.items() if len(v) > 1]
    if len(ranged) > 1:
        raise ConfigError(f"only one parameter may be a range, got {', '.join(ranged)}")
    if ranged:
        key = ranged[0]
        rows = [keyrate_row(**{**{k: v[0] for k, v in grids.items()}, key: x}) for x in grids[key]]
    else:
        rows = [keyrate_row(**{k: v[0] for k, v in grids.items()})]
    if ranged or args.format == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) for k, v in r.items()})
        sys.stdout.write(buf.getvalue())
    else:
        r = rows[0]
        print(f"mu        {r['mu']:g}")
        print(f"phi       {r['phi_deg']:g} deg")
        print(f"p_e       {r['p_e']:g}")
        print(f"eta       {r['eta']:g}")
        print(f"epsilon   {r['epsilon']:.6f}")
        print(f"C(phi)    {r['holevo']:.6f}")
        print(f"h(p_e)    {r['h_pe']:.6f}")
        print(f"R         {r['R']:.6f}")
    return EXIT_OK


def cmd_beam(args: argparse.Namespace) -> int:
    lam = args.wavelength_nm * 1e-9
    w = args.lens_radius_mm * 1e-3
    best = max_beam_length(lam, w)
    print(f"wavelength        {args.wavelength_nm:g} nm")
    print(f"lens radius w     {args.lens_radius_mm:g} mm")
    if args.waist_mm is not None:
        length = beam_channel_length(BeamDesign(lam, w, args.waist_mm * 1e-3))
        print(f"waist w0          {args.waist_mm:g} mm")
        print(f"L(w0)             {length:.3f} m")
    print(f"optimal waist     {best.waist_radius * 1e3:.4f} mm")
    print(f"max L             {best.length:.3f} m")
    print(f"Rayleigh length   {best.rayleigh_length:.3f} m")
    return EXIT_OK


def cmd_prng_dump(args: argparse.Namespace) -> int:
    taps = frozenset(int(t) for t in args.taps.split(","))
    bits, _ = generate_bits(LfsrState(args.seed, taps), args.count)
    text = "".join(map(str, bits.tolist()))
    for i in range(0, len(text), 64):
        print(text[i : i + 64])
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    exp = _experiment(args)
    cfg = calibrate(exp.series_config(0), args.target_bits, args.target_qber)
    raw = exp.to_dict()
    raw["interferometer"]["visibility"] = cfg.interferometer.visibility
    raw["channel"]["extra_system_transmittance"] = cfg.extra_system_transmittance
    new = ExperimentConfig.from_dict(raw)
    print(f"visibility                  {cfg.interferometer.visibility!r}")
    print(f"extra_system_transmittance  {cfg.extra_system_transmittance!r}")
    print(f"extra loss                  {-10 * math.log10(cfg.extra_system_transmittance):.3f} dB")
    if args.write:
        new.save(args.write)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="relqkd", description="Relativistic QKD simulator and calculators")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def experiment_flags(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", help="YAML config (default: shipped demo defaults)")
        sp.add_argument("--series", type=int, help="number of series")
        sp.add_argument("--seed", type=int, help="base seed")
        sp.add_argument("--attack", help="attack name (none, passive, block_first, block_second, delay, usd, prepoll, ...)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
        sp.add_argument("--workers", type=int, default=None, help="parallel worker processes")

    sp = sub.add_parser("run", help="simulate series and report")
    experiment_flags(sp)
    sp.add_argument("--out", help="output directory for reports")
    sp.add_argument("--format", choices=["json", "csv"], help="restrict output to one format")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="sweep one numeric config key")
    experiment_flags(sp)
    sp.add_argument("parameter", help="dotted config key, e.g. channel.transmittance")
    sp.add_argument("range", help="a,b,c or start:stop:num[:log]")
    sp.add_argument("--out", help="CSV file (default stdout)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("keyrate", help="asymptotic key-rate calculator")
    sp.add_argument("--mu", default="0.1")
    sp.add_argument("--phi", default="130", help="modulation depth in degrees")
    sp.add_argument("--pe", default="0.035", help="bit error probability")
    sp.add_argument("--eta", default="0", help="timing-error fraction")
    sp.add_argument("--format", choices=["table", "csv"], default="table")
    sp.set_defaults(func=cmd_keyrate)

    sp = sub.add_parser("beam", help="Gaussian-beam link length designer")
    sp.add_argument("--wavelength-nm", type=float, default=850.0)
    sp.add_argument("--lens-radius-mm", type=float, default=5.8)
    sp.add_argument("--waist-mm", type=float)
    sp.set_defaults(func=cmd_beam)

    sp = sub.add_parser("prng-dump", help="bit-exact LFSR output stream")
    sp.add_argument("--seed", type=lambda s: int(s, 0), default=1)
    sp.add_argument("--count", type=int, default=256)
    sp.add_argument("--taps", default="20,3")
    sp.set_defaults(func=cmd_prng_dump)

    sp = sub.add_parser("calibrate", help="fit visibility and apparatus loss to target yield and QBER")
    experiment_flags(sp)
    sp.add_argument("--target-bits", type=float, default=16.1)
    sp.add_argument("--target-qber", type=float, default=0.035)
    sp.add_argument("--write", help="write the calibrated config here")
    sp.set_defaults(func=cmd_calibrate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CausalityViolation as exc:
        print(f"causality violation: {exc}", file=sys.stderr)
        return EXIT_CAUSALITY
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (ConfigError, DomainError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
