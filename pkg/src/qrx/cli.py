"""Command line: analyze | build | verify | mesh | orbit | report.

Exit codes: 0 success, 1 a verification suite failed, 2 configuration error,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from .errors import ConfigError, QRXError
from .extension import format_orbit, iterate_extension
from .mapmodel import classify_postcritical
from .maps import load_map
from .pipeline import DEFAULT_TOLERANCES, SUITES, JobConfig, Pipeline
from .sphere import ExtensionPoint, SpherePoint
from .spheres import mesh_sphere, write_obj
from .suites import run_suites

DEFAULT_MAP = "one_minus_two_over_zsq"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _common(p, suites=False):
    p.add_argument("--map", default=None, help="bundled map name, map JSON file, or examples/<name>")
    p.add_argument("--config", default=None, help="JobConfig JSON file")
    p.add_argument("--grid-level", type=int, default=None)
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--cache", default=None, help="cache directory (QRX_CACHE takes precedence)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    if suites:
        p.add_argument("--suite", action="append", default=None,
                       help=f"suite name, comma list or 'all' ({', '.join(SUITES)})")


def build_parser():
    parser = _Parser(prog="qrx", description="Quasiregular extension of postcritically finite rational maps")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    p = sub.add_parser("analyze", help="critical orbits and the expansion verdict")
    p.add_argument("--map", default=DEFAULT_MAP)
    p = sub.add_parser("build", help="charts, radius field, s and N0 (cached)")
    _common(p)
    p = sub.add_parser("verify", help="run verification suites and write a JSON report")
    _common(p, suites=True)
    p = sub.add_parser("mesh", help="OBJ meshes of approximating spheres")
    _common(p)
    p.add_argument("--n", action="append", default=None, help="sphere index (repeatable or comma list)")
    p.add_argument("--level", type=int, default=4, help="icosphere subdivision level of the mesh")
    p = sub.add_parser("orbit", help="iterate the extension from a point")
    _common(p)
    p.add_argument("--z", default="0.3 0.2", help="start point 're im' or 'inf'")
    p.add_argument("--r", type=float, default=None, help="radial part (default: a quarter of the way from the unit sphere to S_N0)")
    p.add_argument("--steps", type=int, default=8)
    p = sub.add_parser("report", help="human-readable summary of a JSON report")
    p.add_argument("path")
    return parser


def _split_tolerances(argv):
    """Pull --tol-<name> VALUE / --tol-<name>=VALUE out of argv."""
    rest, tol = [], {}
    it = iter(argv)
    for arg in it:
        if arg.startswith("--tol-"):
            key, _, value = arg[6:].partition("=")
            if not value:
                value = next(it, None)
                if value is None:
                    raise ConfigError(f"{arg} needs a value")
            name = key.replace("-", "_")
            if name not in DEFAULT_TOLERANCES:
                raise ConfigError(f"unknown tolerance {name!r}; known: {', '.join(DEFAULT_TOLERANCES)}")
            try:
                tol[name] = float(value)
            except ValueError as exc:
                raise ConfigError(f"tolerance {name} is not a number: {value!r}") from exc
        else:
            rest.append(arg)
    return rest, tol


def _job(args, tol) -> JobConfig:
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = JobConfig.from_json(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    else:
        cfg = JobConfig.for_map(load_map(args.map or DEFAULT_MAP))
    if args.config and args.map:
        R = load_map(args.map)
        cfg.num, cfg.den = JobConfig.for_map(R).num, JobConfig.for_map(R).den
    if args.grid_level is not None:
        cfg.grid_level = args.grid_level
    if args.n_max is not None:
        cfg.n_max = args.n_max
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    cfg.cache_dir = os.environ.get("QRX_CACHE") or args.cache or cfg.cache_dir
    cfg.tolerances.update(tol)
    if getattr(args, "suite", None):
        names = []
        for item in args.suite:
            names += list(SUITES) if item == "all" else [s.strip() for s in item.split(",") if s.strip()]
        cfg.suites = names
    cfg.validate()
    return cfg


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))
    return obj


def _dump(data, path):
    text = json.dumps(_clean(data), sort_keys=True, indent=1) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------- subcommands


def cmd_analyze(args, tol):
    R = load_map(args.map)
    print(classify_postcritical(R).summary())
    return 0


def cmd_build(args, tol):
    cfg = _job(args, tol)
    pipe = Pipeline.from_config(cfg)
    summary = pipe.summary()
    _dump(summary, cfg.out)
    print(f"charts: {len(summary['charts'])} (r0 = {summary['chart_r0']:g}); s = {summary['s']:.6g}; "
          f"N0 = {summary['N0']}; growth index = {summary['growth_index']}")
    if pipe.cache_dir:
        print(f"cache: {pipe.cache_dir}")
    return 0


def cmd_verify(args, tol):
    cfg = _job(args, tol)
    pipe = Pipeline.from_config(cfg)
    report = run_suites(pipe, cfg.suites)
    out = cfg.out or "report.json"
    _dump(report, out)
    for name in cfg.suites:
        agg = report["aggregate"][name]
        status = "PASS" if agg["pass"] else "FAIL"
        print(f"{status} {name}: {agg['check']}")
    print(f"report: {out}")
    return 0 if report["pass"] else 1


def _indices(values):
    out = []
    for item in values or ["3"]:
        for part in str(item).split(","):
            if part.strip():
                try:
                    out.append(int(part))
                except ValueError as exc:
                    raise ConfigError(f"bad sphere index {part!r}") from exc
    if any(n < 0 for n in out):
        raise ConfigError("sphere indices must be non-negative")
    return out


def cmd_mesh(args, tol):
    cfg = _job(args, tol)
    if not 0 <= args.level <= 8:
        raise ConfigError("mesh level must lie in [0, 8]")
    ns = _indices(args.n)
    pipe = Pipeline.from_config(cfg)
    meshes = [mesh_sphere(pipe.field, n, args.level) for n in ns]
    out = cfg.out or "spheres.obj"
    write_obj(meshes, out)
    print(f"wrote {len(meshes)} object(s), {sum(len(m.vertices) for m in meshes)} vertices, to {out}")
    return 0


def _parse_point(text):
    text = text.strip()
    if text.lower() in ("inf", "infinity", "∞"):
        return SpherePoint(1 + 0j, 0j)
    parts = text.replace(",", " ").split()
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"bad point {text!r}") from exc
    if len(vals) not in (1, 2):
        raise ConfigError(f"bad point {text!r}: expected 're im' or 'inf'")
    return SpherePoint.of(complex(vals[0], vals[1] if len(vals) == 2 else 0.0))


def cmd_orbit(args, tol):
    cfg = _job(args, tol)
    if args.steps < 0:
        raise ConfigError("steps must be non-negative")
    pipe = Pipeline.from_config(cfg)
    z = _parse_point(args.z)
    dom = pipe.domain
    r = args.r
    if r is None:
        r_inner = float(pipe.field.radius(dom.N0, np.atleast_1d(z.a), np.atleast_1d(z.b))[0])
        r = 1 - (1 - r_inner) / 4
    if not r > 0:
        raise ConfigError("radial part must be positive")
    res = iterate_extension(dom, ExtensionPoint(z, r), args.steps)
    text = format_orbit(res, dom)
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_report(args, tol):
    try:
        with open(args.path) as fh:
            report = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report {args.path}: {exc}") from exc
    for key in ("map_hash", "suite", "aggregate", "pass"):
        if key not in report:
            raise ConfigError(f"report lacks {key!r}")
    print(f"map {report['map_hash']}: {'all suites pass' if report['pass'] else 'FAILURES'}")
    for name in report["suite"]:
        agg = report["aggregate"][name]
        status = "PASS" if agg.get("pass") else "FAIL"
        details = ", ".join(f"{k}={_short(v)}" for k, v in agg.items()
                            if k not in ("pass", "check") and not isinstance(v, (dict, list)))
        print(f"  {status} {name} ({agg.get('check', '')}): {details}")
    return 0 if report["pass"] else 1


def _short(v):
    return f"{v:.4g}" if isinstance(v, float) else str(v)


COMMANDS = {"analyze": cmd_analyze, "build": cmd_build, "verify": cmd_verify, "mesh": cmd_mesh,
            "orbit": cmd_orbit, "report": cmd_report}


def cli_run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv, tol = _split_tolerances(argv)
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(message)s")
        return COMMANDS[args.command](args, tol)
    except QRXError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


def main():
    sys.exit(cli_run())


if __name__ == "__main__":
    main()
