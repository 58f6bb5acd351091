"""Quasiregular extensions of postcritically finite rational maps of the sphere."""
from .charts import ChartAtlas, koenig_forward, koenig_inverse, neighborhood_level
from .distortion import (boundary_continuity_check, estimate_distortion, koebe_check, stretch_control,
                         uniform_K_report)
from .errors import (BranchError, ChartDomainError, ConfigError, DomainError, GrowthError, NumericError,
                     PrecisionError, QRXError, WindowError)
from .extension import ExtensionDomain, beta_map, extend, iterate_extension, prism_parametrization
from .mapmodel import classify_postcritical, find_critical_points
from .maps import bundled, load_map
from .modified import ModifiedMapFamily, compose_eval, compose_norm, modified_eval, modified_norm
from .pipeline import JobConfig, Pipeline
from .sphere import ExtensionPoint, RationalFunction, SpherePoint, sph_dist
from .spheres import RadiusField, compute_N0, consecutive_index, icosphere, mesh_sphere
from .winding import winding_eval, winding_norms, winding_scaled

__all__ = [name for name in dir() if not name.startswith("_")]
