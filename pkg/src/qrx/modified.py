"""Modified maps f_n and their compositions f_1 ∘ … ∘ f_n.

f_n agrees with f except on the level-n neighbourhood U_c^n of each critical
point c, where f is replaced by chi_{f(c)}^{-1} ∘ H ∘ chi_c and H is the
winding map rescaled to the disk chi_c(U_c^n).  For orbit points closer to
the cycle than their depth allows (n < k_c) the whole base neighbourhood W_c
is used.

Derivatives are carried as real 2x2 Jacobians in frame coordinates: at a
point (a:b) the frame coordinate is a/b when |a| <= |b| and b/a otherwise.
Holomorphic steps contribute complex scalars, winding steps the polar
stretch diag(1, d) of the winding map, so the operator norm of a composition
with several winding steps is exact rather than a product bound.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .charts import ChartAtlas
from .errors import ConfigError, DomainError
from .sphere import RationalFunction, SpherePoint, as_hom, normalize, sph_dist_h
from .winding import winding_rescaled


def frame_coordinate(a, b):
    inverted = np.abs(a) > np.abs(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(inverted, b / np.where(inverted, a, 1), a / np.where(inverted, 1, b))
    return u, inverted


def complex_matrix(c):
    c = np.asarray(c, dtype=complex)
    out = np.empty(c.shape + (2, 2))
    out[..., 0, 0] = c.real
    out[..., 0, 1] = -c.imag
    out[..., 1, 0] = c.imag
    out[..., 1, 1] = c.real
    return out


def winding_jacobian(d, rho, x):
    """Real Jacobian of x -> rho^d h_d(x/rho) in the standard basis of C = R^2."""
    x = np.asarray(x, dtype=complex)
    r = np.abs(x)
    th = np.angle(x)
    inner = rho ** (d - 1)
    out = np.empty(x.shape + (2, 2))
    # inside: polar stretch (radial inner, angular d*inner) between rotated frames
    c1, s1 = np.cos(th), np.sin(th)
    c2, s2 = np.cos(d * th), np.sin(d * th)
    rot_in = np.stack([np.stack([c1, s1], -1), np.stack([-s1, c1], -1)], -2)  # Rot(-th)
    rot_out = np.stack([np.stack([c2, -s2], -1), np.stack([s2, c2], -1)], -2)  # Rot(d*th)
    stretch = np.zeros(x.shape + (2, 2))
    stretch[..., 0, 0] = inner
    stretch[..., 1, 1] = d * inner
    inside = rot_out @ stretch @ rot_in
    outside = complex_matrix(d * x ** (d - 1))
    mask = (r <= rho)[..., None, None]
    out[...] = np.where(mask, inside, outside)
    return out


def _local_frame_factor(inverted, u, at_infinity):
    """d(zeta)/d(u) between the frame coordinate u and the chart-centre coordinate zeta."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(inverted == at_infinity, 1 + 0j, -1 / u ** 2)


def _frame_local_factor(inverted, u, at_infinity):
    """d(u)/d(zeta), the inverse of _local_frame_factor."""
    return np.where(inverted == at_infinity, 1 + 0j, -u ** 2)


def spherical_norms(J, u_in, u_out):
    """(max, min) stretch for the spherical metric from a frame Jacobian."""
    sv = np.linalg.svd(J, compute_uv=False)
    conv = (1 + np.abs(u_in) ** 2) / (1 + np.abs(u_out) ** 2)
    return sv[..., 0] * conv, sv[..., -1] * conv


@dataclass
class CompositionTrace:
    n: int
    points: list = field(default_factory=list)  # point before each step, in order j = n, ..., 1
    winding_steps: list = field(default_factory=list)  # (j, critical node index)

    @property
    def k(self):
        """Index k with f_{k+1} the first non-holomorphic step, or None."""
        if not self.winding_steps:
            return None
        return self.winding_steps[0][0] - 1


class ModifiedMapFamily:
    def __init__(self, R: RationalFunction, atlas: ChartAtlas | None = None, n_max: int = 12):
        self.R = R
        self.atlas = atlas or ChartAtlas(R)
        self.schedule = self.atlas.schedule
        self.n_max = n_max
        self._bound_cache = {}

    @property
    def critical_nodes(self):
        return self.atlas.critical_nodes

    def level_radius(self, node, n):
        """Chart radius of the neighbourhood where f_n winds near this node."""
        return node.level_radius(max(n, node.depth))

    def _sph_bound(self, node, n):
        key = (node.index, max(n, node.depth))
        if key not in self._bound_cache:
            rho = self.level_radius(node, n)
            if rho >= 1:
                bound = node.sph_radius
            else:
                w = rho * np.exp(2j * np.pi * np.arange(128) / 128)
                zeta = node.inverse(w)
                a, b = node.coord.from_local(zeta)
                bound = float(sph_dist_h(a, b, node.point.a, node.point.b).max())
            self._bound_cache[key] = 1.1 * bound + 1e-14
        return self._bound_cache[key]

    def critical_owner(self, n, a, b):
        """Owner (critical node index or -1) of U_c^n for each point, with chart data."""
        a = np.asarray(a, dtype=complex)
        b = np.asarray(b, dtype=complex)
        own = np.full(a.shape, -1)
        zeta = np.full(a.shape, np.nan + 0j)
        chi = np.full(a.shape, np.nan + 0j)
        dchi = np.full(a.shape, np.nan + 0j)
        for node in self.critical_nodes:
            near = (own < 0) & (sph_dist_h(a, b, node.point.a, node.point.b) <= self._sph_bound(node, n))
            if not near.any():
                continue
            idx = np.nonzero(near)[0]
            zl = node.coord.to_local(a[idx], b[idx])
            c, dc, ok = node.evaluate(zl)
            rho = self.level_radius(node, n)
            ins = ok & (np.abs(c) <= rho * (1 + 1e-12)) & node.contains_local(zl, c, ok)
            sel = idx[ins]
            own[sel] = node.index
            zeta[sel], chi[sel], dchi[sel] = zl[ins], c[ins], dc[ins]
        return own, zeta, chi, dchi

    # ---- one step
    def step(self, n, a, b, jac=None):
        """Apply f_n to homogeneous points; optionally push a frame Jacobian along.

        Returns (a', b', jac', owner) with owner the winding node or -1.
        """
        a = np.atleast_1d(np.asarray(a, dtype=complex))
        b = np.atleast_1d(np.asarray(b, dtype=complex))
        own, zeta, chi, dchi = self.critical_owner(n, a, b)
        p, q, dp, dq, t = self.R._pair(a, b)
        na, nb = normalize(p, q)
        if jac is not None:
            inv_out = np.abs(p) > np.abs(q)
            with np.errstate(divide="ignore", invalid="ignore"):
                der = np.where(inv_out, (dq * p - q * dp) / p ** 2, (dp * q - p * dq) / q ** 2)
            new_jac = complex_matrix(der) @ jac
        for node in self.critical_nodes:
            sel = own == node.index
            if not sel.any():
                continue
            target = self.atlas.nodes[node.image_index]
            rho = self.level_radius(node, n)
            x = chi[sel]
            y = winding_rescaled(node.degree, rho, x)
            y = np.atleast_1d(y)
            zt, dzt = target.inverse(y, with_derivative=True)
            ta, tb = target.coord.from_local(zt)
            na[sel], nb[sel] = ta, tb
            if jac is not None:
                u_in, inv_in = frame_coordinate(a[sel], b[sel])
                u_out, inv_o = frame_coordinate(ta, tb)
                c_in = dchi[sel] * _local_frame_factor(inv_in, u_in, node.point.is_infinity)
                c_out = dzt * _frame_local_factor(inv_o, u_out, target.point.is_infinity)
                step_jac = complex_matrix(c_out) @ winding_jacobian(node.degree, rho, x) @ complex_matrix(c_in)
                new_jac[sel] = step_jac @ jac[sel]
        return na, nb, (new_jac if jac is not None else None), own

    # ---- compositions
    def compose(self, n, a, b, with_jacobian=True, record=False):
        """f_1 ∘ … ∘ f_n on homogeneous arrays; returns (a, b, J, owners per step, points per step)."""
        a = np.atleast_1d(np.asarray(a, dtype=complex))
        b = np.atleast_1d(np.asarray(b, dtype=complex))
        a, b = normalize(a, b)
        J = np.broadcast_to(np.eye(2), a.shape + (2, 2)).copy() if with_jacobian else None
        owners = []
        points = []
        for j in range(n, 0, -1):
            if record:
                points.append((a.copy(), b.copy()))
            a, b, J, own = self.step(j, a, b, J)
            owners.append(own)
        return a, b, J, owners, points

    def compose_norms(self, n, a, b):
        a0, b0 = normalize(np.atleast_1d(np.asarray(a, dtype=complex)), np.atleast_1d(np.asarray(b, dtype=complex)))
        a1, b1, J, _, _ = self.compose(n, a0, b0)
        u_in, _ = frame_coordinate(a0, b0)
        u_out, _ = frame_coordinate(a1, b1)
        return spherical_norms(J, u_in, u_out)


# ---------------------------------------------------------------- operation wrappers


def _points(z):
    scalar = isinstance(z, SpherePoint) or np.ndim(z) == 0 and not isinstance(z, tuple)
    a, b = as_hom(z)
    return np.atleast_1d(a), np.atleast_1d(b), scalar


def _check_n(family, n):
    if not 1 <= n <= family.n_max:
        raise DomainError(f"n must lie in [1, {family.n_max}]")


def modified_eval(family: ModifiedMapFamily, n: int, z):
    _check_n(family, n)
    a, b, scalar = _points(z)
    na, nb, _, _ = family.step(n, a, b)
    if scalar:
        return SpherePoint(complex(na[0]), complex(nb[0]))
    return na, nb


def modified_norm(family: ModifiedMapFamily, n: int, z):
    """Operator norm of Df_n for the spherical metric."""
    _check_n(family, n)
    a, b, scalar = _points(z)
    a, b = normalize(a, b)
    J = np.broadcast_to(np.eye(2), a.shape + (2, 2)).copy()
    na, nb, J, _ = family.step(n, a, b, J)
    mx, _ = spherical_norms(J, frame_coordinate(a, b)[0], frame_coordinate(na, nb)[0])
    return float(mx[0]) if scalar else mx


def compose_eval(family: ModifiedMapFamily, n: int, z):
    """(f_1 ∘ … ∘ f_n(z), CompositionTrace) for a single point."""
    _check_n(family, n)
    a, b, _ = _points(z)
    a1, b1, _, owners, points = family.compose(n, a[:1], b[:1], with_jacobian=False, record=True)
    trace = CompositionTrace(n)
    for step, (j, own) in enumerate(zip(range(n, 0, -1), owners)):
        pa, pb = points[step]
        trace.points.append(SpherePoint(complex(pa[0]), complex(pb[0])))
        if own[0] >= 0:
            trace.winding_steps.append((j, int(own[0])))
    return SpherePoint(complex(a1[0]), complex(b1[0])), trace


def compose_norm(family: ModifiedMapFamily, n: int, z):
    _check_n(family, n)
    a, b, scalar = _points(z)
    mx, _ = family.compose_norms(n, a, b)
    return float(mx[0]) if scalar else mx


def min_norm_growth(family: ModifiedMapFamily, grid, n_max: int | None = None, threshold=None):
    """Table n -> min over the grid of the composition norm, plus the first n exceeding threshold."""
    a, b = grid
    n_max = n_max or family.n_max
    table = {}
    first = None
    for n in range(1, n_max + 1):
        mx, _ = family.compose_norms(n, a, b)
        table[n] = float(mx.min())
        if threshold is not None and first is None and table[n] > threshold:
            first = n
    return table, first


def schedule_compose(family: ModifiedMapFamily, m: int, z):
    """Composition indexed by whole cycle passes.

    For a periodic cycle of period k the m-th composition is f_1 ∘ … ∘ f_{km};
    for chains it is f_1 ∘ … ∘ f_m.  Returns (points, norms).
    """
    tag = family.schedule.tag
    if tag not in ("chain", "periodic-cycle", "chained-critical", "fixed-value"):
        raise ConfigError(f"schedule tag {tag!r} has no substituted composition")
    k = period(family)
    n = k * m
    a, b, _ = _points(z)
    a1, b1, J, _, _ = family.compose(n, a, b)
    mx, _ = spherical_norms(J, frame_coordinate(*normalize(a, b))[0], frame_coordinate(a1, b1)[0])
    return (a1, b1), mx


def period(family: ModifiedMapFamily) -> int:
    return max(c.period for c in family.schedule.cycles) if family.schedule.cycles else 1


def half_step_norm(D_m, D_next, j: int, k: int):
    """D_m (D_{m+1}/D_m)^{j/k}: geometric interpolation between whole cycle passes."""
    return D_m * (D_next / D_m) ** (j / k)


def regular_mask(family: ModifiedMapFamily, n: int, a, b, margin=1e-4):
    """True where no step of f_1 ∘ … ∘ f_n meets a winding circle or a critical axis within ``margin``.

    At such points the composition is smooth, so finite differences are meaningful.
    """
    a, b = normalize(np.atleast_1d(np.asarray(a, dtype=complex)), np.atleast_1d(np.asarray(b, dtype=complex)))
    ok = np.ones(a.shape, bool)
    for j in range(n, 0, -1):
        for node in family.critical_nodes:
            near = sph_dist_h(a, b, node.point.a, node.point.b) <= family._sph_bound(node, j)
            if not near.any():
                continue
            c, _, good = node.evaluate(node.coord.to_local(a[near], b[near]))
            ratio = np.abs(c) / family.level_radius(node, j)
            bad = good & ((np.abs(ratio - 1) < margin) | (ratio < margin))
            ok[np.nonzero(near)[0][bad]] = False
        a, b, _, _ = family.step(j, a, b)
    return ok
