"""Riemann sphere arithmetic in homogeneous coordinates.

Points are pairs (a, b) with z = a/b, the point at infinity being b = 0.
Vectorised helpers work on complex arrays ``a`` and ``b`` of equal shape;
the small ``SpherePoint`` class is the scalar face of the same idea.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import ConfigError, DomainError, EvaluationError


def normalize(a, b):
    """Rescale so that max(|a|, |b|) = 1 (elementwise)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    m = np.maximum(np.abs(a), np.abs(b))
    if np.any(m == 0) or not np.all(np.isfinite(m)):
        raise DomainError("(0:0) or non-finite homogeneous coordinates")
    return a / m, b / m


def as_hom(z):
    """Convert SpherePoint / complex / array (inf allowed) / (a, b) tuple to normalised arrays."""
    if isinstance(z, SpherePoint):
        return np.asarray(z.a, dtype=complex), np.asarray(z.b, dtype=complex)
    if isinstance(z, tuple) and len(z) == 2:
        return normalize(*z)
    z = np.asarray(z, dtype=complex)
    inf = np.isinf(z.real) | np.isinf(z.imag)
    big = np.abs(np.where(inf, 0, z)) > 1
    zz = np.where(inf, 0, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(inf, 1.0, np.where(big, 1.0, zz))
        b = np.where(inf, 0.0, np.where(big, 1.0 / np.where(big, zz, 1), 1.0))
    return a.astype(complex), b.astype(complex)


def to_complex(a, b):
    """Affine value a/b, with complex('inf') at b = 0."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(b == 0, complex(np.inf, 0), a / np.where(b == 0, 1, b))
    return out


@dataclass(frozen=True, eq=False)
class SpherePoint:
    a: complex
    b: complex

    def __post_init__(self):
        a, b = complex(self.a), complex(self.b)
        m = max(abs(a), abs(b))
        if m == 0 or not np.isfinite(m):
            raise DomainError("(0:0) is not a point of the sphere")
        object.__setattr__(self, "a", a / m)
        object.__setattr__(self, "b", b / m)

    @classmethod
    def of(cls, z) -> "SpherePoint":
        if isinstance(z, SpherePoint):
            return z
        a, b = as_hom(complex(z))
        return cls(complex(a), complex(b))

    @property
    def is_infinity(self) -> bool:
        return self.b == 0

    def to_complex(self) -> complex:
        return complex(to_complex(self.a, self.b))

    def __eq__(self, other):
        if not isinstance(other, SpherePoint):
            try:
                other = SpherePoint.of(other)
            except (TypeError, ValueError):
                return NotImplemented
        return abs(self.a * other.b - self.b * other.a) <= 1e-14

    __hash__ = None

    def __repr__(self):
        return f"SpherePoint({format_point(self)})"


INF = SpherePoint(1, 0)


def format_point(z, digits=6) -> str:
    """Compact label: integers without decimals, unicode minus, ∞."""
    a, b = as_hom(z)
    if complex(b) == 0:
        return "∞"
    w = complex(a) / complex(b)

    def num(x):
        if abs(x - round(x)) < 1e-9:
            s = str(int(round(x)))
        else:
            s = f"{x:.{digits}g}"
        return s.replace("-", "−")

    re, im = w.real, w.imag
    if abs(im) < 1e-12 * max(1, abs(re)):
        return num(re)
    ims = "i" if abs(abs(im) - 1) < 1e-9 else num(abs(im)) + "i"
    if abs(re) < 1e-12 * max(1, abs(im)):
        return ("−" if im < 0 else "") + ims
    return num(re) + ("−" if im < 0 else "+") + ims


# ---------------------------------------------------------------- metric


def sph_dist_h(a1, b1, a2, b2):
    # Lagrange identity: |a1 b2 - a2 b1|^2 + |a1 ā2 + b1 b̄2|^2 = |p1|^2 |p2|^2,
    # and the first term is the half-chord sine, so atan2 gives the arc directly.
    s = np.abs(a1 * b2 - a2 * b1)
    c = np.abs(a1 * np.conj(a2) + b1 * np.conj(b2))
    return 2.0 * np.arctan2(s, c)


def sph_dist(z, w):
    """Geodesic distance for the density 2/(1+|z|^2); values in [0, pi]."""
    a1, b1 = as_hom(z)
    a2, b2 = as_hom(w)
    out = sph_dist_h(a1, b1, a2, b2)
    return float(out) if np.ndim(out) == 0 else out


def chordal_dist(z, w):
    a1, b1 = as_hom(z)
    a2, b2 = as_hom(w)
    num = np.abs(a1 * b2 - a2 * b1)
    den = np.sqrt((np.abs(a1) ** 2 + np.abs(b1) ** 2) * (np.abs(a2) ** 2 + np.abs(b2) ** 2))
    return 2 * num / den


def sphere_to_r3(a, b):
    """Unit-sphere embedding compatible with the density 2/(1+|z|^2); ∞ is the north pole."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    n = np.abs(a) ** 2 + np.abs(b) ** 2
    ab = a * np.conj(b)
    return np.stack([2 * ab.real / n, 2 * ab.imag / n, (np.abs(a) ** 2 - np.abs(b) ** 2) / n], axis=-1)


def r3_to_sphere(X):
    """Inverse of sphere_to_r3 for nonzero vectors (radial part discarded)."""
    X = np.asarray(X, dtype=float)
    X = X / np.linalg.norm(X, axis=-1, keepdims=True)
    x, y, h = X[..., 0], X[..., 1], X[..., 2]
    w = x + 1j * y
    # choose the better conditioned of (1+h : ...) and (... : 1-h)
    north = h > 0
    a = np.where(north, 1 + h, w)
    b = np.where(north, np.conj(w), 1 - h)
    return normalize(a, b)


# ---------------------------------------------------------------- rational maps


def _trim(c):
    c = np.asarray(c, dtype=complex).ravel()
    if c.size == 0:
        return np.zeros(1, dtype=complex)
    nz = np.nonzero(np.abs(c) > 0)[0]
    return c[: nz[-1] + 1] if nz.size else np.zeros(1, dtype=complex)


def _sylvester_resultant(p, q):
    n = len(p) - 1
    if n == 0:
        return 1.0
    M = np.zeros((2 * n, 2 * n), dtype=complex)
    for i in range(n):
        M[i, i:i + n + 1] = p[::-1]
        M[n + i, i:i + n + 1] = q[::-1]
    return abs(np.linalg.det(M))


class RationalFunction:
    """Rational map num/den with ascending coefficient lists (c0 + c1 z + ...)."""

    def __init__(self, num, den, check=True, tol=1e-12):
        num, den = _trim(num), _trim(den)
        if not np.all(np.isfinite(num)) or not np.all(np.isfinite(den)):
            raise ConfigError("non-finite coefficients")
        if np.all(den == 0):
            raise ConfigError("zero denominator")
        if np.all(num == 0):
            raise ConfigError("zero numerator: constant map")
        self.degree = max(len(num), len(den)) - 1
        if self.degree < 1:
            raise ConfigError("constant map")
        n = self.degree + 1
        scale = max(np.abs(num).max(), np.abs(den).max())
        self.num = np.pad(num, (0, n - len(num))) / scale
        self.den = np.pad(den, (0, n - len(den))) / scale
        self._dnum = npoly.polyder(self.num) if self.degree else np.zeros(1)
        self._dden = npoly.polyder(self.den) if self.degree else np.zeros(1)
        self._rnum = self.num[::-1]
        self._rden = self.den[::-1]
        self._drnum = npoly.polyder(self._rnum)
        self._drden = npoly.polyder(self._rden)
        if check:
            pn = self.num / np.abs(self.num).max()
            qn = self.den / np.abs(self.den).max()
            res = _sylvester_resultant(pn, qn)
            if res <= tol:
                raise ConfigError(f"numerator and denominator share a root (resultant {res:.3g})")

    # -- construction helpers
    @classmethod
    def mobius(cls, alpha, beta, gamma, delta):
        """z -> (alpha z + beta) / (gamma z + delta)."""
        return cls([beta, alpha], [delta, gamma])

    @classmethod
    def identity(cls):
        return cls([0, 1], [1])

    def compose(self, g: "RationalFunction") -> "RationalFunction":
        """self ∘ g."""
        n, m = self.degree, g.degree
        R, S = g.num, g.den
        Rp = [np.ones(1, dtype=complex)]
        Sp = [np.ones(1, dtype=complex)]
        for _ in range(n):
            Rp.append(npoly.polymul(Rp[-1], R))
            Sp.append(npoly.polymul(Sp[-1], S))
        P = np.zeros(n * m + 1, dtype=complex)
        Q = np.zeros(n * m + 1, dtype=complex)
        for k in range(n + 1):
            term = npoly.polymul(Rp[k], Sp[n - k])
            term = np.pad(term, (0, n * m + 1 - len(term)))[: n * m + 1]
            P += self.num[k] * term
            Q += self.den[k] * term
        return RationalFunction(P, Q, check=False)

    def iterate(self, k: int) -> "RationalFunction":
        out = self
        for _ in range(k - 1):
            out = self.compose(out)
        return out

    def map_hash(self) -> str:
        c = np.concatenate([self.num, self.den])
        lead = c[np.argmax(np.abs(c))]
        c = c / lead
        vals = [[round(float(x.real), 12) + 0.0, round(float(x.imag), 12) + 0.0] for x in c]
        return hashlib.sha256(json.dumps(vals).encode()).hexdigest()[:16]

    def to_config(self):
        return {"num": [[float(x.real), float(x.imag)] for x in self.num],
                "den": [[float(x.real), float(x.imag)] for x in self.den]}

    # -- evaluation
    def _pair(self, a, b):
        """(p, q, p', q', w, flag) in the better-conditioned affine variable w."""
        small = np.abs(a) <= np.abs(b)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(small, a / np.where(small, b, 1), b / np.where(small, 1, a))
        p = np.where(small, npoly.polyval(t, self.num), npoly.polyval(t, self._rnum))
        q = np.where(small, npoly.polyval(t, self.den), npoly.polyval(t, self._rden))
        dp = np.where(small, npoly.polyval(t, self._dnum), npoly.polyval(t, self._drnum))
        dq = np.where(small, npoly.polyval(t, self._dden), npoly.polyval(t, self._drden))
        return p, q, dp, dq, t

    def eval_h(self, a, b):
        p, q, *_ = self._pair(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))
        try:
            return normalize(p, q)
        except DomainError as exc:
            raise EvaluationError("indeterminate (0:0) value: common-root contamination") from exc

    def sharp_h(self, a, b):
        p, q, dp, dq, t = self._pair(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))
        return (1 + np.abs(t) ** 2) * np.abs(dp * q - p * dq) / (np.abs(p) ** 2 + np.abs(q) ** 2)

    def __call__(self, z):
        if isinstance(z, SpherePoint):
            A, B = self.eval_h(z.a, z.b)
            return SpherePoint(complex(A), complex(B))
        A, B = self.eval_h(*as_hom(z))
        return to_complex(A, B)

    def affine(self, z):
        """Value and derivative at finite z (no care taken at poles)."""
        z = np.asarray(z, dtype=complex)
        p = npoly.polyval(z, self.num)
        q = npoly.polyval(z, self.den)
        dp = npoly.polyval(z, self._dnum)
        dq = npoly.polyval(z, self._dden)
        return p / q, (dp * q - p * dq) / q ** 2

    def __repr__(self):
        return f"RationalFunction(num={self.num.tolist()}, den={self.den.tolist()})"


def rational_eval(R: RationalFunction, z):
    """Homogeneous evaluation; accepts SpherePoint, complex or arrays."""
    return R(z)


def sph_derivative(R: RationalFunction, z):
    """Spherical derivative (1+|z|^2)/(1+|f(z)|^2)|f'(z)|, continuous through ∞."""
    out = R.sharp_h(*as_hom(z))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------- local charts


@dataclass(frozen=True)
class LocalCoordinate:
    """Affine coordinate zeta centred at q: zeta = z - q, or 1/z when q = ∞."""
    center: SpherePoint

    @property
    def at_infinity(self):
        return self.center.is_infinity

    def to_local(self, a, b):
        a = np.asarray(a, dtype=complex)
        b = np.asarray(b, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.at_infinity:
                bad = a == 0
                z = b / np.where(bad, 1, a)
            else:
                q = self.center.to_complex()
                bad = b == 0
                z = (a - q * b) / np.where(bad, 1, b)
        return np.where(bad, complex(np.inf, 0), z)

    def from_local(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        if self.at_infinity:
            return normalize(np.ones_like(zeta), zeta)
        return normalize(self.center.to_complex() + zeta, np.ones_like(zeta))

    def metric_factor(self, zeta):
        """(1+|z|^2)/2 · |dzeta/dz|, so that chart^# = |chart'(zeta)| · metric_factor."""
        zeta = np.asarray(zeta, dtype=complex)
        if self.at_infinity:
            return (1 + np.abs(zeta) ** 2) / 2
        return (1 + np.abs(self.center.to_complex() + zeta) ** 2) / 2

    def mobius_from_local(self) -> RationalFunction:
        if self.at_infinity:
            return RationalFunction.mobius(0, 1, 1, 0)
        return RationalFunction.mobius(1, self.center.to_complex(), 0, 1)

    def mobius_to_local(self) -> RationalFunction:
        if self.at_infinity:
            return RationalFunction.mobius(0, 1, 1, 0)
        return RationalFunction.mobius(1, -self.center.to_complex(), 0, 1)


def local_map(R: RationalFunction, source: SpherePoint, target: SpherePoint) -> RationalFunction:
    """R written in the local coordinates at source and target."""
    pre = LocalCoordinate(source).mobius_from_local()
    post = LocalCoordinate(target).mobius_to_local()
    return post.compose(R.compose(pre))


# ---------------------------------------------------------------- derivatives


def _as_real(v):
    v = np.asarray(v)
    if np.iscomplexobj(v):
        return np.concatenate([v.real.ravel(), v.imag.ravel()])
    return v.astype(float).ravel()


def jacobian_norms(fn, x, h=None):
    """(max, min) singular value of a central-difference Jacobian.

    ``fn`` maps a complex scalar to a complex scalar (planar map) or a real
    vector to a real vector.
    """
    planar = np.iscomplexobj(x) or isinstance(x, complex)
    if planar:
        x0 = complex(x)
        if h is None:
            h = 1e-5 * (1 + abs(x0))
        cols = []
        for e in (1.0, 1j):
            fp = _as_real(fn(x0 + h * e))
            fm = _as_real(fn(x0 - h * e))
            cols.append((fp - fm) / (2 * h))
    else:
        x0 = np.asarray(x, dtype=float)
        if h is None:
            h = 1e-5 * (1 + np.linalg.norm(x0))
        cols = []
        for i in range(x0.size):
            e = np.zeros_like(x0)
            e[i] = h
            cols.append((_as_real(fn(x0 + e)) - _as_real(fn(x0 - e))) / (2 * h))
    J = np.stack(cols, axis=1)
    if not np.all(np.isfinite(J)):
        raise EvaluationError("non-finite finite differences")
    sv = np.linalg.svd(J, compute_uv=False)
    return float(sv[0]), float(sv[-1])


# ---------------------------------------------------------------- 3D points


@dataclass
class ExtensionPoint:
    z: SpherePoint
    r: float
    tags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.z = SpherePoint.of(self.z)
        self.r = float(self.r)
        if not self.r > 0:
            raise DomainError("radial part must be positive")

    def to_r3(self):
        return self.r * sphere_to_r3(self.z.a, self.z.b)

    @classmethod
    def from_r3(cls, X):
        X = np.asarray(X, dtype=float)
        a, b = r3_to_sphere(X)
        return cls(SpherePoint(complex(a), complex(b)), float(np.linalg.norm(X)))


def radial_product_metric(p: ExtensionPoint, q: ExtensionPoint) -> float:
    """½(r1+r2)·sph_dist + |r1−r2|, comparable to the Euclidean distance in R^3."""
    ds = sph_dist(p.z, q.z)
    if ds >= np.pi - 1e-12:
        raise DomainError("points are antipodal: no common open hemisphere")
    return 0.5 * (p.r + q.r) * ds + abs(p.r - q.r)
