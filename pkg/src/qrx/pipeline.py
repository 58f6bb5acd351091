"""Job configuration and the lazily built chain atlas -> family -> radius field -> extension."""
from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from functools import cached_property

from .charts import ChartAtlas, load_atlas, save_atlas
from .errors import ConfigError
from .extension import ExtensionDomain
from .maps import load_map
from .modified import ModifiedMapFamily
from .sphere import RationalFunction
from .spheres import RadiusField, compute_N0

log = logging.getLogger("qrx")

DEFAULT_TOLERANCES = {
    "winding": 1e-4,  # relative, closed-form vs finite-difference norms
    "residual": 1e-8,  # chart conjugacy residuals
    "derivative": 1e-3,  # relative, composition norm vs finite differences
    "growth_factor": 10.0,  # min norm must exceed growth_factor * s
    "accumulation": 0.05,  # 1 - min r_N
    "monotone_ratio": 50.0,  # b / a in the radius monotonicity fit
    "scaling": 1e-9,  # relative, distance-scaling identity
    "continuity": 1e-6,  # prism boundary residual
    "fault": 1e-4,  # reference level reported for the perturbed height ratio
    "slope": 0.05,  # log K_hat slope for uniformity
    "control_slope": 0.3,  # slope the non-uniform control must exceed
    "radial": 1e-7,  # sphere-to-sphere radial error
}

SUITES = ("winding", "coordinates", "derivative", "growth", "radii", "scaling",
          "consecutive", "continuity", "uniformity", "spheres")


def _pair(c):
    c = complex(c)
    return [c.real, c.imag]


@dataclass
class JobConfig:
    num: list  # [re, im] pairs, ascending powers
    den: list
    grid_level: int = 4
    n_max: int = 12
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    suites: list = field(default_factory=lambda: list(SUITES))
    out: str | None = None
    cache_dir: str | None = None
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.grid_level < 0 or self.grid_level > 8:
            raise ConfigError("grid level must lie in [0, 8]")
        if self.n_max < 2:
            raise ConfigError("n_max must be at least 2")
        for name, value in self.tolerances.items():
            if name not in DEFAULT_TOLERANCES:
                raise ConfigError(f"unknown tolerance {name!r}")
            if not float(value) > 0:
                raise ConfigError(f"tolerance {name} must be positive")
        for s in self.suites:
            if s not in SUITES:
                raise ConfigError(f"unknown suite {s!r}; choose from {', '.join(SUITES)}")

    @classmethod
    def for_map(cls, R: RationalFunction, **kw):
        return cls(num=[_pair(c) for c in R.num], den=[_pair(c) for c in R.den], **kw)

    def rational(self) -> RationalFunction:
        return load_map({"num": self.num, "den": self.den})

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "JobConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        if "map" in data:
            m = data.pop("map")
            data.setdefault("num", m.get("num"))
            data.setdefault("den", m.get("den"))
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(data.pop("tolerances", {}) or {})
        try:
            return cls(tolerances=tol, **data)
        except TypeError as exc:
            raise ConfigError(f"bad config field: {exc}") from exc


def cache_key(map_hash: str, tolerances: dict, grid_level: int, n_max: int) -> str:
    blob = json.dumps({"map": map_hash, "tol": tolerances, "grid": grid_level, "n_max": n_max}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


class Pipeline:
    """Objects built on demand for one map and configuration."""

    def __init__(self, R: RationalFunction, grid_level=4, n_max=12, seed=0, tolerances=None, cache_dir=None):
        self.R = R
        self.grid_level = grid_level
        self.n_max = n_max
        self.seed = seed
        self.tol = dict(DEFAULT_TOLERANCES)
        self.tol.update(tolerances or {})
        self.map_hash = R.map_hash()
        self.cache_dir = None
        if cache_dir:
            self.cache_dir = os.path.join(cache_dir, cache_key(self.map_hash, self.tol, grid_level, n_max))

    @classmethod
    def from_config(cls, cfg: JobConfig):
        return cls(cfg.rational(), cfg.grid_level, cfg.n_max, cfg.seed, cfg.tolerances, cfg.cache_dir)

    @cached_property
    def atlas(self) -> ChartAtlas:
        if self.cache_dir and os.path.isdir(self.cache_dir):
            try:
                atlas = load_atlas(self.R, self.cache_dir, self.map_hash)
                log.info("charts read from %s", self.cache_dir)
                return atlas
            except ConfigError as exc:
                log.info("cache not used: %s", exc)
        atlas = ChartAtlas(self.R)
        if self.cache_dir:
            save_atlas(atlas, self.cache_dir, self.map_hash)
        return atlas

    @cached_property
    def family(self) -> ModifiedMapFamily:
        return ModifiedMapFamily(self.R, self.atlas, n_max=self.n_max)

    def _calibration_path(self):
        return os.path.join(self.cache_dir, "field.json") if self.cache_dir else None

    @cached_property
    def field(self) -> RadiusField:
        path = self._calibration_path()
        if path and os.path.isfile(path):
            with open(path) as fh:
                data = json.load(fh)
            if data.get("map_hash") == self.map_hash:
                return RadiusField(self.family, self.grid_level, self.n_max, calibration=data)
        fld = RadiusField(self.family, self.grid_level, self.n_max)
        if path:
            os.makedirs(self.cache_dir, exist_ok=True)
            with open(path, "w") as fh:
                json.dump({"map_hash": self.map_hash, **fld.calibration(), "N0": compute_N0(fld)}, fh, sort_keys=True)
        return fld

    @cached_property
    def N0(self) -> int:
        path = self._calibration_path()
        if path and os.path.isfile(path):
            with open(path) as fh:
                data = json.load(fh)
            if data.get("map_hash") == self.map_hash and "N0" in data:
                return int(data["N0"])
        return compute_N0(self.field)

    @cached_property
    def domain(self) -> ExtensionDomain:
        return ExtensionDomain(self.field, self.N0)

    def summary(self) -> dict:
        fld = self.field
        return {"map_hash": self.map_hash, "chart_r0": self.atlas.r0, "s": fld.s, "field_r0": fld.r0,
                "growth_index": fld.growth_index, "N0": self.N0,
                "growth_table": {str(k): v for k, v in fld.growth_table.items()},
                "charts": [nd.describe() for nd in self.atlas.nodes]}
