"""Bundled example maps and map-file loading."""
from __future__ import annotations

import json
import os

from .errors import ConfigError
from .sphere import RationalFunction

BUNDLED = {
    # 0 -> ∞ -> 1 -> -1, fixed with multiplier -4
    "one_minus_two_over_zsq": ([-2, 0, 1], [0, 0, 1]),
    # flexible Lattès map; every critical value lands on ∞ (multiplier 4)
    "lattes": ([1, 0, 2, 0, 1], [0, -4, 0, 4]),
    # 0 -> ∞ -> 1 -> 1/2 <-> -1, a repelling 2-cycle
    "one_minus_half_over_zsq": ([-1, 0, 2], [0, 0, 2]),
    # no critical points at all
    "doubling": ([0, 2], [1]),
    # periodic critical points; not expanding
    "square": ([0, 0, 1], [1]),
}


def bundled(name: str) -> RationalFunction:
    num, den = BUNDLED[name]
    return RationalFunction(num, den)


def _pairs(values):
    out = []
    for v in values:
        if isinstance(v, (list, tuple)):
            if len(v) != 2:
                raise ConfigError(f"complex coefficient must be [re, im], got {v!r}")
            out.append(complex(float(v[0]), float(v[1])))
        else:
            out.append(complex(float(v)))
    return out


def map_from_config(cfg: dict) -> RationalFunction:
    try:
        return RationalFunction(_pairs(cfg["num"]), _pairs(cfg["den"]))
    except KeyError as exc:
        raise ConfigError(f"map config lacks {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad map config: {exc}") from exc


def load_map(spec) -> RationalFunction:
    """A JSON map file, a bundled name, or a path whose basename is a bundled name."""
    if isinstance(spec, RationalFunction):
        return spec
    if isinstance(spec, dict):
        return map_from_config(spec)
    spec = str(spec)
    if os.path.isfile(spec):
        try:
            with open(spec) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read map file {spec}: {exc}") from exc
        if "map" in cfg and isinstance(cfg["map"], dict):
            cfg = cfg["map"]
        return map_from_config(cfg)
    name = os.path.splitext(os.path.basename(spec.rstrip("/")))[0]
    if name in BUNDLED:
        return bundled(name)
    raise ConfigError(f"unknown map {spec!r}; bundled maps: {', '.join(sorted(BUNDLED))}")
