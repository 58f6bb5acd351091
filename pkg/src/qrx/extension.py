"""The extension F of f to the shell between S_{N0} and its reflection.

A point (z, r) with r <= 1 is located in the gap [r_n(z), r_m(z)] of the
radii at z (m the consecutive index of n) with parameter
t = (r - r_n)/(r_m - r_n).  Away from the critical neighbourhoods

    F(z, r) = (f(z), (1-t) r_{n-1}(f z) + t r_{m-1}(f z)),

and on U_c^n (where m = n + 1) the disk coordinate x = chi_c(z) is moved by
the interpolated winding map, between the windings used by f_n and f_{n+1}.
Points outside the unit sphere are handled by conjugation with the inversion
M(z, r) = (z, 1/r).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError, WindowError
from .sphere import ExtensionPoint, SpherePoint, as_hom, format_point, normalize, sph_dist_h
from .spheres import TIE_TOL, RadiusField, compute_N0
from .winding import winding_rescaled

AXIS_TOL = 1e-10
MAX_INDEX = 60


@dataclass
class CylinderCoords:
    x: complex
    t: float


@dataclass
class Located:
    """Gap data for a batch of points."""
    n: np.ndarray
    m: np.ndarray
    t: np.ndarray
    owner: np.ndarray  # critical node winding at level n, or -1
    chi: np.ndarray


class AxisProximityError(NumericError):
    pass


class ExtensionDomain:
    def __init__(self, field: RadiusField, N0: int | None = None):
        self.field = field
        self.family = field.family
        self.R = field.family.R
        self.N0 = compute_N0(field) if N0 is None else N0

    # ---- radii helpers
    def radius(self, n, a, b):
        return self.field.radius(n, a, b)

    def radii_table(self, a, b, r):
        """{j: r_j} for j = 0.. J with J beyond the first radius above r, plus the window."""
        win = self.field.window
        table = {0: self.radius(0, a, b)}
        j = 0
        above = np.zeros(a.shape, bool)
        while True:
            j += 1
            if j > MAX_INDEX:
                raise DomainError("radius too close to the sphere: no enclosing gap within the index limit")
            table[j] = self.radius(j, a, b)
            above |= table[j] > r
            if above.all() and j >= self.N0 + win:
                # the gap's lower index is below j; its window must fit into the table
                lower = self._lower_index(table, r)
                if np.all(lower + win <= j):
                    return table

    @staticmethod
    def _lower_index(table, r):
        best = np.full(np.shape(r), -1)
        best_r = np.full(np.shape(r), -np.inf)
        for j in sorted(table):
            rj = table[j]
            ok = (rj <= r) & (rj > best_r + TIE_TOL)
            best = np.where(ok, j, best)
            best_r = np.where(ok, rj, best_r)
        return best

    def locate(self, a, b, r):
        a = np.atleast_1d(a)
        b = np.atleast_1d(b)
        r = np.atleast_1d(np.asarray(r, dtype=float))
        table = self.radii_table(a, b, r)
        n = self._lower_index(table, r)
        win = self.field.window
        m = np.full(n.shape, -1)
        best_r = np.full(n.shape, np.inf)
        stack = np.array([table[j] for j in range(len(table))])
        rn = stack[n, np.arange(n.size)]
        for j in sorted(table):
            if j == 0:
                continue
            inwin = (np.abs(j - n) <= win) & (j != n)
            rj = table[j]
            better = inwin & (rj > rn + TIE_TOL) & (rj < best_r - TIE_TOL)
            m = np.where(better, j, m)
            best_r = np.where(better, rj, best_r)
        if np.any(m < 0):
            raise WindowError("no consecutive index within the window")
        t = (r - rn) / (best_r - rn)
        owner = np.full(n.shape, -1)
        chi = np.full(n.shape, np.nan + 0j)
        for nn in np.unique(n):
            sel = n == nn
            own, _, c, _ = self.family.critical_owner(int(nn), a[sel], b[sel])
            owner[sel] = own
            chi[sel] = c
        return Located(n, m, np.clip(t, 0.0, 1.0), owner, chi)

    def in_domain(self, a, b, r, slack=1e-12):
        return (r <= 1 + slack) & (r >= self.radius(self.N0, a, b) - slack)

    # ---- branches
    def regular_branch(self, n, m, a, b, t):
        fa, fb = self.R.eval_h(a, b)
        out = np.empty(np.shape(a))
        for nn, mm in set(zip(np.atleast_1d(n).tolist(), np.atleast_1d(m).tolist())):
            sel = (n == nn) & (m == mm)
            lo = self.radius(nn - 1, fa[sel], fb[sel])
            hi = self.radius(mm - 1, fa[sel], fb[sel])
            out[sel] = (1 - t[sel]) * lo + t[sel] * hi
        return fa, fb, out

    def critical_branch(self, node_index, n, a, b, t, mu_scale=1.0):
        """alpha_2 ∘ beta ∘ alpha_1^{-1} for points of U_c^n at normalised height t."""
        node = self.family.atlas.nodes[node_index]
        zeta = node.coord.to_local(a, b)
        x, _, ok = node.evaluate(zeta)
        if not np.all(ok):
            raise NumericError("critical chart failed inside its neighbourhood")
        y, t_img = _beta_normalised(self, node_index, n, x, t, mu_scale)
        target = self.family.atlas.nodes[node.image_index]
        wa, wb = target.coord.from_local(target.inverse(y))
        lo = self.radius(n - 1, wa, wb)
        hi = self.radius(n, wa, wb)
        return wa, wb, (1 - t_img) * lo + t_img * hi

    # ---- F
    def extend_arrays(self, a, b, r, mu_scale=1.0, check_axis=True):
        """F on homogeneous arrays with radial parts r <= 1; returns (a', b', r', branch, owner)."""
        a, b = normalize(np.atleast_1d(np.asarray(a, dtype=complex)), np.atleast_1d(np.asarray(b, dtype=complex)))
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(~self.in_domain(a, b, r)):
            raise DomainError("point outside the extension domain")
        na, nb = self.R.eval_h(a, b)
        nr = np.ones(r.shape)
        branch = np.full(r.shape, "sphere", dtype=object)
        owner = np.full(r.shape, -1)
        inner = r < 1 - 1e-15
        if not inner.any():
            return na, nb, nr, branch, owner
        idx = np.nonzero(inner)[0]
        loc = self.locate(a[idx], b[idx], r[idx])
        crit = loc.owner >= 0
        if check_axis and crit.any():
            for node in self.family.critical_nodes:
                sel = idx[loc.owner == node.index]
                if sel.size and np.any(sph_dist_h(a[sel], b[sel], node.point.a, node.point.b) < AXIS_TOL):
                    raise AxisProximityError(f"point within {AXIS_TOL} of the critical axis at {format_point(node.point)}")
        if np.any(crit & (loc.m != loc.n + 1)):
            raise NumericError("radii are not monotone inside a critical neighbourhood")
        reg = idx[~crit]
        if reg.size:
            fa, fb, rr = self.regular_branch(loc.n[~crit], loc.m[~crit], a[reg], b[reg], loc.t[~crit])
            na[reg], nb[reg], nr[reg] = fa, fb, rr
            branch[reg] = "regular"
        for node in self.family.critical_nodes:
            for nn in np.unique(loc.n[loc.owner == node.index]):
                mask = (loc.owner == node.index) & (loc.n == nn)
                sel = idx[mask]
                wa, wb, rr = self.critical_branch(node.index, int(nn), a[sel], b[sel], loc.t[mask], mu_scale)
                na[sel], nb[sel], nr[sel] = wa, wb, rr
                branch[sel] = "critical"
                owner[sel] = node.index
        return na, nb, nr, branch, owner

    def extend_r3(self, X, **kw):
        """F on points of R^3 (rows), both halves of the shell."""
        from .sphere import r3_to_sphere, sphere_to_r3
        X = np.atleast_2d(np.asarray(X, dtype=float))
        r = np.linalg.norm(X, axis=1)
        a, b = r3_to_sphere(X)
        outer = r > 1
        rin = np.where(outer, 1 / r, r)
        na, nb, nr, _, _ = self.extend_arrays(a, b, rin, **kw)
        nr = np.where(outer, 1 / nr, nr)
        return sphere_to_r3(na, nb) * nr[:, None]


def prism_height(domain: ExtensionDomain, node_index: int, n: int, side: str):
    """q_n = r_{n+1}(c) - r_n(c) on the critical side, r_n(p) - r_{n-1}(p) on the image side."""
    key = (node_index, n, side)
    cache = domain.__dict__.setdefault("_heights", {})
    if key not in cache:
        cache[key] = _prism_height(domain, node_index, n, side)
    return cache[key]


def _prism_height(domain, node_index, n, side):
    node = domain.family.atlas.nodes[node_index]
    if side == "critical":
        pt, lo, hi = node.point, n, n + 1
    elif side == "postcritical":
        pt, lo, hi = domain.family.atlas.nodes[node.image_index].point, n - 1, n
    else:
        raise DomainError(f"unknown prism side {side!r}")
    a, b = np.atleast_1d(pt.a), np.atleast_1d(pt.b)
    q = float(domain.radius(hi, a, b)[0] - domain.radius(lo, a, b)[0])
    if q <= 0:
        raise NumericError("radii are not monotone at a critical orbit point")
    return q


def _disk_radius(domain, node_index, n, side):
    fam = domain.family
    node = fam.atlas.nodes[node_index]
    rho = fam.level_radius(node, n)
    return rho if side == "critical" else rho ** node.degree


def prism_parametrization(domain: ExtensionDomain, side: str, node_index: int, n: int, coords: CylinderCoords):
    """alpha_1 (critical side) or alpha_2 (image side) as an ExtensionPoint."""
    fam = domain.family
    node = fam.atlas.nodes[node_index]
    chart = node if side == "critical" else fam.atlas.nodes[node.image_index]
    if abs(coords.x) > _disk_radius(domain, node_index, n, side) * (1 + 1e-12):
        raise DomainError("disk coordinate outside the prism")
    q = prism_height(domain, node_index, n, side)
    if not -1e-15 <= coords.t <= q * (1 + 1e-12):
        raise DomainError("height outside the prism")
    zeta = chart.inverse(np.atleast_1d(complex(coords.x)))
    a, b = chart.coord.from_local(zeta)
    lo_index = n if side == "critical" else n - 1
    lo = domain.radius(lo_index, a, b)[0]
    hi = domain.radius(lo_index + 1, a, b)[0]
    r = (q - coords.t) / q * lo + coords.t / q * hi
    return ExtensionPoint(SpherePoint(complex(a[0]), complex(b[0])), float(r), {"side": side, "n": n})


def prism_parametrization_inverse(domain: ExtensionDomain, side: str, node_index: int, n: int, p: ExtensionPoint):
    fam = domain.family
    node = fam.atlas.nodes[node_index]
    chart = node if side == "critical" else fam.atlas.nodes[node.image_index]
    a, b = np.atleast_1d(p.z.a), np.atleast_1d(p.z.b)
    x, _, ok = chart.evaluate(chart.coord.to_local(a, b))
    if not ok[0]:
        raise DomainError("point outside the chart")
    q = prism_height(domain, node_index, n, side)
    lo_index = n if side == "critical" else n - 1
    lo = domain.radius(lo_index, a, b)[0]
    hi = domain.radius(lo_index + 1, a, b)[0]
    return CylinderCoords(complex(x[0]), float(q * (p.r - lo) / (hi - lo)))


def _beta_normalised(domain, node_index, n, x, t, mu_scale=1.0):
    """Winding interpolation with heights normalised to [0, 1]; returns (y, image height)."""
    node = domain.family.atlas.nodes[node_index]
    rho_n = domain.family.level_radius(node, n)
    rho_next = domain.family.level_radius(node, n + 1)
    y = (1 - t) * winding_rescaled(node.degree, rho_n, x) + t * winding_rescaled(node.degree, rho_next, x)
    return np.atleast_1d(y), mu_scale * np.asarray(t)


def beta_map(domain: ExtensionDomain, node_index: int, n: int, coords: CylinderCoords, mu_scale=1.0):
    """Interpolated winding between the cylinders over U_c^n and its image.

    ``mu_scale`` multiplies the height ratio (fault injection).
    """
    fam = domain.family
    node = fam.atlas.nodes[node_index]
    rho_n = fam.level_radius(node, n)
    rho_next = fam.level_radius(node, n + 1)
    if abs(coords.x) > rho_n * (1 + 1e-12):
        raise DomainError("disk coordinate outside the cylinder")
    q = prism_height(domain, node_index, n, "critical")
    q_img = prism_height(domain, node_index, n, "postcritical")
    w = (q - coords.t) / q
    y = w * winding_rescaled(node.degree, rho_n, coords.x) + (1 - w) * winding_rescaled(node.degree, rho_next, coords.x)
    return CylinderCoords(complex(y), float(mu_scale * q_img / q * coords.t))


def reflect(p: ExtensionPoint) -> ExtensionPoint:
    return ExtensionPoint(p.z, 1.0 / p.r, dict(p.tags))


def extend(domain: ExtensionDomain, p: ExtensionPoint, **kw) -> ExtensionPoint:
    outer = p.r > 1
    r = 1 / p.r if outer else p.r
    na, nb, nr, branch, owner = domain.extend_arrays(np.atleast_1d(p.z.a), np.atleast_1d(p.z.b), r, **kw)
    out = ExtensionPoint(SpherePoint(complex(na[0]), complex(nb[0])), float(nr[0]),
                         {"branch": branch[0], "owner": int(owner[0])})
    return reflect(out) if outer else out


@dataclass
class OrbitRecord:
    step: int
    point: ExtensionPoint
    branch: str
    owner: int


@dataclass
class OrbitResult:
    records: list = field(default_factory=list)
    escaped: bool = False
    escape_index: int | None = None

    @property
    def final(self):
        return self.records[-1].point


def iterate_extension(domain: ExtensionDomain, p: ExtensionPoint, k: int, **kw) -> OrbitResult:
    res = OrbitResult([OrbitRecord(0, p, "start", -1)])
    cur = p
    for step in range(1, k + 1):
        rin = 1 / cur.r if cur.r > 1 else cur.r
        a, b = np.atleast_1d(cur.z.a), np.atleast_1d(cur.z.b)
        if not domain.in_domain(a, b, np.atleast_1d(rin))[0]:
            res.escaped = True
            res.escape_index = step - 1
            break
        cur = extend(domain, cur, **kw)
        res.records.append(OrbitRecord(step, cur, cur.tags["branch"], cur.tags["owner"]))
    return res


def format_orbit(res: OrbitResult, domain: ExtensionDomain | None = None) -> str:
    lines = []
    nodes = domain.family.atlas.nodes if domain is not None else None
    for rec in res.records:
        z = rec.point.z
        zs = "inf" if z.is_infinity else f"{z.to_complex().real:.17g} {z.to_complex().imag:.17g}"
        owner = "-" if rec.owner < 0 or nodes is None else format_point(nodes[rec.owner].point)
        lines.append(f"{rec.step} {zs} {rec.point.r:.17g} {rec.branch} {owner}")
    if res.escaped:
        lines.append(f"# escaped after step {res.escape_index}")
    return "\n".join(lines) + "\n"
