"""Command-line front end: ``elastosg --example 1 --study spatial ...``.

Exit codes: 0 success, 2 configuration/CFL rejection, 3 instability abort.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .assembly import PhysicalParams
from .errors import ConfigurationError, InstabilityError
from .harness import (
    parse_dyadic,
    run_field_report,
    run_spatial_study,
    run_temporal_study,
    write_table_csv,
)
from .problem import BallInitialData, ExperimentConfig, example_config

DEFAULT_MESH_LADDER = "1,2,4"
DEFAULT_SIGMA_LADDER = "2^-4,2^-5,2^-6,2^-7"

_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def read_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lower().replace("-", "_")] = value
    return out


def _triple(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.replace(",", " ").split()]
    if len(parts) != 3:
        raise ConfigurationError(f"expected three numbers, got {text!r}")
    return tuple(parts)  # type: ignore[return-value]


def build_config(settings: dict[str, str]) -> ExperimentConfig:
    """ExperimentConfig from merged file/flag settings (strings)."""
    try:
        cfg = example_config(int(settings.get("example", "1")))
        changes: dict = {}
        if "lo" in settings:
            changes["lo"] = _triple(settings["lo"])
        if "hi" in settings:
            changes["hi"] = _triple(settings["hi"])
        for key, name, conv in (
            ("t", "T", float),
            ("c_p", "C_p", float),
            ("c_ts", "C_ts", float),
            ("degree", "degree", int),
            ("cells", "cells_per_axis", int),
            ("sigma", "sigma", parse_dyadic),
            ("initial_data", "initial_data", str),
            ("start", "start", str),
        ):
            if key in settings:
                changes[name] = conv(settings[key])
        for key, name in (("allow_unstable", "allow_unstable"), ("zero_initial_data", "zero_initial_data")):
            if key in settings:
                changes[name] = _BOOL[settings[key].lower()]
        p = cfg.params
        if "e" in settings or "beta" in settings:
            p = PhysicalParams.from_modulus(
                float(settings.get("e", p.E)), float(settings.get("beta", p.beta)), float(settings.get("rho", p.rho))
            )
        elif any(k in settings for k in ("rho", "lambda1", "lambda2")):
            p = PhysicalParams(
                float(settings.get("rho", p.rho)),
                float(settings.get("lambda1", p.lambda1)),
                float(settings.get("lambda2", p.lambda2)),
            )
        changes["params"] = p
        if "center" in settings or "radius" in settings:
            changes["ball"] = BallInitialData(
                _triple(settings["center"]) if "center" in settings else cfg.ball.center,
                parse_dyadic(settings["radius"]) if "radius" in settings else cfg.ball.radius,
            )
        return cfg.with_(**changes)
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"bad configuration value: {exc}") from exc


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="elastosg", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="flat key = value configuration file")
    ap.add_argument("--example", type=int, choices=(1, 2))
    ap.add_argument("--cells", type=int, help="cells per axis (field/temporal studies)")
    ap.add_argument("--sigma", help="time step, e.g. 2^-7 (field/spatial studies)")
    ap.add_argument("--degree", type=int, choices=(1, 2, 3))
    ap.add_argument("--study", choices=("spatial", "temporal", "field"))
    ap.add_argument("--ladder", help="comma list: cells per axis (spatial) or time steps (temporal)")
    ap.add_argument("--reference", help="reference cells (spatial) or time step (temporal)")
    ap.add_argument("--out", help="CSV output path (default: stdout)")
    ap.add_argument("--allow-unstable", action="store_true", default=None, help="skip the CFL gate")
    ap.add_argument("--export-every", type=int, help="write field snapshots every k steps (field study)")
    ap.add_argument("--export-dir", help="directory for snapshots (default: next to --out or ./snapshots)")
    ap.add_argument("--initial-data", choices=("project", "interpolate"))
    ap.add_argument("--start", choices=("taylor1", "taylor2"))
    ap.add_argument("--no-timing", action="store_true", help="leave wall_seconds empty (byte-stable CSV)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        settings = read_config_file(args.config) if args.config else {}
        flags = {
            "example": args.example,
            "cells": args.cells,
            "sigma": args.sigma,
            "degree": args.degree,
            "study": args.study,
            "ladder": args.ladder,
            "reference": args.reference,
            "out": args.out,
            "allow_unstable": None if args.allow_unstable is None else "true",
            "export_every": args.export_every,
            "export_dir": args.export_dir,
            "initial_data": args.initial_data,
            "start": args.start,
        }
        settings.update({k: str(v) for k, v in flags.items() if v is not None})
        cfg = build_config(settings)
        study = settings.get("study", "field")
        out = settings.get("out")

        if study == "spatial":
            ladder = [int(x) for x in settings.get("ladder", DEFAULT_MESH_LADDER).split(",")]
            ref = int(settings["reference"]) if "reference" in settings else None
            rows = run_spatial_study(cfg, ladder, cfg.sigma, reference_cells=ref)
            text = write_table_csv(rows, out, timing=not args.no_timing)
            for row in rows:
                side = row.parameter
                print(
                    f"# side {row.resolution:>6}  diameter h = {math.sqrt(3) * side:.6g}",
                    file=sys.stderr,
                )
        elif study == "temporal":
            ladder = [parse_dyadic(x) for x in settings.get("ladder", DEFAULT_SIGMA_LADDER).split(",")]
            ref = parse_dyadic(settings["reference"]) if "reference" in settings else None
            rows = run_temporal_study(cfg, cfg.cells_per_axis, ladder, sigma_reference=ref)
            text = write_table_csv(rows, out, timing=not args.no_timing)
        elif study == "field":
            every = int(settings["export_every"]) if "export_every" in settings else None
            export_dir = settings.get("export_dir") or (str(Path(out).with_suffix("")) + "_snapshots" if out else "snapshots")
            rep = run_field_report(cfg, cfg.cells_per_axis, cfg.sigma, export_every=every, export_dir=export_dir)
            lines = ["quantity,value", f"u,{rep.u_max:.17g}"]
            lines += [f"psi{k},{v:.17g}" for k, v in rep.psi_max.items()]
            text = "\n".join(lines) + "\n"
            if out:
                Path(out).write_text(text)
        else:
            raise ConfigurationError(f"unknown study {study!r}")
        if not out:
            sys.stdout.write(text)
        return 0
    except InstabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return InstabilityError.exit_code
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigurationError.exit_code


if __name__ == "__main__":
    sys.exit(main())
