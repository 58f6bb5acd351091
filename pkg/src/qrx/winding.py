"""Winding maps: angle multiplication inside the unit disk, z^d outside."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


def winding_eval(d: int, z):
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(r <= 1, r * np.exp(1j * d * np.angle(z)), z ** d)
    return complex(out) if out.ndim == 0 else out


def winding_rescaled(d: int, rho_in, z):
    """rho_in^d · h_d(z / rho_in): winds the disk of radius rho_in onto radius rho_in^d.

    Equal to z^d on and outside the circle |z| = rho_in, so it can be evaluated
    on either side of that circle.
    """
    z = np.asarray(z, dtype=complex)
    out = rho_in ** d * np.asarray(winding_eval(d, z / rho_in))
    return complex(out) if out.ndim == 0 else out


def winding_rescaled_norms(d: int, rho_in, z):
    """(max, min) expansion of winding_rescaled at z."""
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    inner = rho_in ** (d - 1)
    outer = d * r ** (d - 1)
    mx = np.where(r <= rho_in, d * inner, outer)
    mn = np.where(r <= rho_in, inner, outer)
    if mx.ndim == 0:
        return float(mx), float(mn)
    return mx, mn


def domain_radius(d: int, lam, n: int) -> float:
    return abs(lam) ** (-n / d)


def winding_scaled(d: int, lam, n: int, z):
    """|λ|^{-n} h_d(|λ|^{n/d} z), defined on the disk of radius |λ|^{-n/d}."""
    rho = domain_radius(d, lam, n)
    if np.any(np.abs(z) > rho * (1 + 1e-12)):
        raise DomainError("argument outside the winding domain")
    return winding_rescaled(d, rho, z)


def winding_norms(d: int, lam, n: int, z):
    """Closed-form (max, min) expansion of winding_scaled (or h_d itself when n = 0)."""
    rho = domain_radius(d, lam, n)
    if n > 0 and np.any(np.abs(z) > rho * (1 + 1e-12)):
        raise DomainError("argument outside the winding domain")
    return winding_rescaled_norms(d, rho, z)


@dataclass(frozen=True)
class Sector:
    """Points of R·D̄ whose argument is within alpha/2 of theta0."""
    theta0: float
    alpha: float
    R: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha <= 2 * np.pi:
            raise DomainError("sector opening must lie in (0, 2π]")

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        dev = np.angle(z * np.exp(-1j * self.theta0))
        return (np.abs(z) <= self.R) & (np.abs(dev) <= self.alpha / 2 + 1e-15)

    def sample(self, rng, size):
        r = self.R * np.sqrt(rng.random(size))
        th = self.theta0 + self.alpha * (rng.random(size) - 0.5)
        return r * np.exp(1j * th)


def sector_bounds_check(d: int, sector: Sector, z, w, slack=1e-12):
    """Check |z−w| ≤ |h_d(z)−h_d(w)| ≤ d|z−w| for paired samples; violations are reported."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    dist = np.abs(z - w)
    img = np.abs(np.asarray(winding_eval(d, z)) - np.asarray(winding_eval(d, w)))
    low = img < dist - slack
    high = img > d * dist + slack
    bad = np.nonzero(low | high)[0]
    ratio = np.where(dist > 0, img / np.where(dist > 0, dist, 1), 1.0)
    return {
        "pairs": int(z.size),
        "violations": int(bad.size),
        "violating_indices": bad.tolist()[:20],
        "min_ratio": float(ratio.min()) if z.size else None,
        "max_ratio": float(ratio.max()) if z.size else None,
        "in_sector": bool(np.all(sector.contains(z)) and np.all(sector.contains(w))),
    }
