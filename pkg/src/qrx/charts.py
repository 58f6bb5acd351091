"""Linearising charts at the postcritical cycle and their pullbacks along critical orbits.

Every point q of a critical orbit carries a chart chi_q with chi_q(q) = 0:

* on a repelling cycle p_1 -> ... -> p_k the charts are Koenigs coordinates,
  normalised so that f acts as w -> sigma*w between consecutive cycle points,
  |sigma| = |Λ|^{1/k}; for a fixed point sigma is the multiplier itself;
* at a non-critical orbit point chi_q = chi_{f(q)} ∘ f;
* at a critical point of local degree d, chi_c = (chi_{f(c)} ∘ f)^{1/d}, the
  root's branch being tracked on a polar grid around c.

The base neighbourhood of q is W_q = chi_q^{-1}(closed unit disk).  With
ell = |sigma|, D_q the product of local degrees from q to the cycle and k_q
the number of steps to reach the cycle, the level-n neighbourhood is
U_q^n = {z in W_q : |chi_q(z)| <= ell^{-(n-k_q)/D_q}} for n >= k_q.
"""
from __future__ import annotations

import math
import struct
import json
import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import BranchError, ChartDomainError, ConfigError, PrecisionError
from .mapmodel import OrbitSchedule, classify_postcritical, find_critical_points
from .sphere import (LocalCoordinate, RationalFunction, SpherePoint, as_hom, local_map,
                     sph_dist_h)

CAUCHY_TOL = 1e-13
NEWTON_TOL = 1e-15
GRID_NR = 48
GRID_NT = 64


def _zero_low_terms(L: RationalFunction, order: int, label: str):
    """Clear the rounding residue of the terms that must vanish at the chart centre."""
    num = L.num.copy()
    scale = max(np.abs(L.num).max(), np.abs(L.den).max())
    if np.abs(num[:order]).max() > 1e-7 * scale:
        raise ChartDomainError(f"local map at {label} does not vanish to order {order}")
    num[:order] = 0
    if abs(L.den[0]) < 1e-12 * scale:
        raise ChartDomainError(f"local map at {label} has a pole at the centre")
    return num, L.den.copy()


def _horner(x, coef):
    """Value and derivative of the ascending-coefficient polynomial at x."""
    val = np.full(np.shape(x), coef[-1], dtype=complex)
    der = np.zeros(np.shape(x), dtype=complex)
    for c in coef[-2::-1]:
        der = der * x + val
        val = val * x + c
    return val, der


def _series_quotient(num, den, order):
    """Taylor coefficients of num/den at 0 up to the given order."""
    num = np.concatenate([num, np.zeros(order + 1)])[:order + 1].astype(complex)
    den = np.concatenate([den, np.zeros(order + 1)])[:order + 1].astype(complex)
    out = np.zeros(order + 1, dtype=complex)
    for k in range(order + 1):
        out[k] = (num[k] - np.dot(den[1:k + 1], out[k - 1::-1][:k])) / den[0]
    return out


def koenig_series(members, sigma, order=40):
    """Taylor coefficients of the cycle charts, solved order by order from chi_{j+1} ∘ L_j = sigma chi_j."""
    P = len(members)
    powers = []
    for m in members:
        s = _series_quotient(m.Lnum, m.Lden, order)
        pw = [np.eye(1, order + 1, 0, dtype=complex)[0], s]
        for _ in range(2, order + 1):
            pw.append(np.convolve(pw[-1], s)[:order + 1])
        powers.append(np.array(pw))
    lam = np.array([m.step_multiplier for m in members])
    coef = np.zeros((P, order + 1), dtype=complex)
    coef[:, 1] = [m.a1 for m in members]
    nxt = (np.arange(P) + 1) % P
    for k in range(2, order + 1):
        rhs = np.array([np.dot(coef[nxt[j], 1:k], powers[j][1:k, k]) for j in range(P)])
        M = sigma * np.eye(P, dtype=complex)
        M[np.arange(P), nxt] -= lam ** k
        coef[:, k] = np.linalg.solve(M, rhs)
    return coef


class ChartNode:
    """Common part: local coordinate, local map to the image node, polar grid."""

    kind = "node"

    def __init__(self, atlas, onode, R: RationalFunction):
        self.atlas = atlas
        self.index = onode.index
        self.point: SpherePoint = onode.point
        self.coord = LocalCoordinate(self.point)
        self.degree = onode.degree
        self.depth = onode.depth
        self.total_degree = onode.total_degree
        self.image_index = onode.image
        self.cycle_index = onode.cycle if onode.cycle >= 0 else None
        target = atlas.schedule.nodes[onode.image].point
        L = local_map(R, self.point, target)
        self.Lnum, self.Lden = _zero_low_terms(L, self.degree, repr(self.point))
        self.dLnum = npoly.polyder(self.Lnum)
        self.dLden = npoly.polyder(self.Lden)
        self.lead = self.Lnum[self.degree] / self.Lden[0]  # L(zeta) ~ lead * zeta^d
        self.a1 = None  # chart derivative at the centre
        self.grid = None
        self.grid_radius = None
        self.exit_radius = None
        self.sph_radius = None
        self.taylor = None

    # ---- local map
    def L(self, zeta):
        """L(zeta) and L'(zeta), numerator and denominator by one Horner pass each."""
        with np.errstate(all="ignore"):
            p, dp = _horner(zeta, self.Lnum)
            q, dq = _horner(zeta, self.Lden)
            return p / q, (dp * q - p * dq) / (q * q)

    def solve_L(self, target, seed, iters=40):
        """Newton for L(x) = target from seed; returns (x, converged)."""
        x = np.array(seed, dtype=complex, copy=True)
        done = np.zeros(x.shape, bool)
        for _ in range(iters):
            val, der = self.L(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(done, 0, (val - target) / der)
            bad = ~np.isfinite(step)
            step = np.where(bad, 0, step)
            x = x - step
            done |= bad | (np.abs(step) <= NEWTON_TOL * np.maximum(np.abs(x), 1e-300))
            if done.all():
                break
        val, _ = self.L(x)
        ok = np.isfinite(x) & (np.abs(val - target) <= 1e-11 * np.maximum(np.abs(target), 1e-300) + 1e-300)
        return x, ok

    # ---- chart
    def evaluate(self, zeta):
        raise NotImplementedError

    def inverse(self, w):
        raise NotImplementedError

    @property
    def ell(self):
        return self.atlas.ell[self.cycle_of()]

    def cycle_of(self):
        nd = self
        while nd.cycle_index is None:
            nd = self.atlas.nodes[nd.image_index]
        return nd.cycle_index

    def level_radius(self, n):
        """Radius of chi_q(U_q^n)."""
        return self.ell ** (-(n - self.depth) / self.total_degree)

    def sharp(self, zeta, dchi):
        """Chart derivative from the sphere (spherical metric) to the plane (Euclidean)."""
        return np.abs(dchi) * self.coord.metric_factor(zeta)

    # ---- grid
    def _grid_reference(self, zeta):
        """chi/zeta at the grid node nearest to zeta (clamped to the grid)."""
        if self.grid is None:
            return np.full(np.shape(zeta), self.a1, dtype=complex)
        dr = self.grid_radius / (GRID_NR - 1)
        ir = np.clip(np.rint(np.abs(zeta) / dr).astype(int), 0, GRID_NR - 1)
        it = np.rint(np.mod(np.angle(zeta), 2 * np.pi) / (2 * np.pi / GRID_NT)).astype(int) % GRID_NT
        return self.grid[ir, it]

    def grid_points(self, radius):
        r = np.linspace(0, radius, GRID_NR)
        th = 2 * np.pi * np.arange(GRID_NT) / GRID_NT
        return r[:, None] * np.exp(1j * th)[None, :]

    def build_grid(self, outer=1.3, max_tries=6):
        radius = 1.5 / abs(self.a1)
        for _ in range(max_tries):
            Z = self.grid_points(radius)
            chi, ok = self._grid_values(Z)
            mag = np.where(ok, np.abs(chi), np.nan)
            if np.all(ok[-1]) and np.all(mag[-1] >= outer):
                break
            radius *= 1.4
        else:
            raise ChartDomainError(f"chart at {self.point!r} does not cover its unit disk")
        exits = np.empty(GRID_NT)
        dr = radius / (GRID_NR - 1)
        for j in range(GRID_NT):
            m = mag[:, j]
            inside = m <= 1
            first_out = np.argmax(~inside)
            if inside[first_out] or not np.all(np.isfinite(m[first_out:])) or np.any(m[first_out:] <= 1):
                raise ChartDomainError(f"chart at {self.point!r} is not star-shaped on ray {j}")
            m0, m1 = m[first_out - 1], m[first_out]
            exits[j] = dr * (first_out - 1 + (1 - m0) / (m1 - m0))
        with np.errstate(divide="ignore", invalid="ignore"):
            G = np.where(np.abs(Z) > 0, chi / np.where(np.abs(Z) > 0, Z, 1), self.a1)
        G[0, :] = self.a1
        self.grid = G
        self.grid_radius = radius
        self.exit_radius = exits
        bd = exits * np.exp(2j * np.pi * np.arange(GRID_NT) / GRID_NT)
        a, b = self.coord.from_local(bd)
        self.sph_radius = float(sph_dist_h(a, b, self.point.a, self.point.b).max())
        self._fit_taylor()

    def _fit_taylor(self, ncoef=32):
        ring = int(0.8 * (GRID_NR - 1))
        rho = self.grid_radius * ring / (GRID_NR - 1)
        g = np.fft.fft(self.grid[ring]) / GRID_NT
        k = np.arange(min(ncoef, GRID_NT // 2))
        self.taylor = g[k] / rho ** k  # chi(zeta) = zeta * sum taylor[k] zeta^k

    def taylor_inverse(self, w, iters=30):
        """Solve the Taylor model chi(zeta) = w by Newton (seed for exact polishing)."""
        w = np.asarray(w, dtype=complex)
        c = np.concatenate([[0], self.taylor])
        dc = npoly.polyder(c)
        x = w / self.a1
        for _ in range(iters):
            step = (npoly.polyval(x, c) - w) / npoly.polyval(x, dc)
            step = np.where(np.isfinite(step), step, 0)
            x = x - step
            if np.all(np.abs(step) <= 1e-15 * np.maximum(np.abs(x), 1e-300)):
                break
        return x

    def _grid_values(self, Z):
        chi, _, ok = self.evaluate(Z.ravel())
        return chi.reshape(Z.shape), ok.reshape(Z.shape)

    # ---- membership on the sphere
    def contains_local(self, zeta, chi, ok):
        dr = self.grid_radius / (GRID_NR - 1)
        it = np.rint(np.mod(np.angle(zeta), 2 * np.pi) / (2 * np.pi / GRID_NT)).astype(int) % GRID_NT
        inside = ok & (np.abs(chi) <= 1 + 1e-12) & (np.abs(zeta) <= self.exit_radius[it] + dr)
        return inside

    def chart_on_sphere(self, a, b):
        """(inside W_q, zeta, chi, dchi) for homogeneous points."""
        a = np.atleast_1d(np.asarray(a, dtype=complex))
        b = np.atleast_1d(np.asarray(b, dtype=complex))
        near = sph_dist_h(a, b, self.point.a, self.point.b) <= 1.05 * self.sph_radius + 1e-12
        zeta = np.full(a.shape, np.nan + 0j)
        chi = np.full(a.shape, np.nan + 0j)
        dchi = np.full(a.shape, np.nan + 0j)
        inside = np.zeros(a.shape, bool)
        if near.any():
            zl = self.coord.to_local(a[near], b[near])
            c, dc, ok = self.evaluate(zl)
            zeta[near], chi[near], dchi[near] = zl, c, dc
            inside[near] = self.contains_local(zl, c, ok)
        return inside, zeta, chi, dchi

    def describe(self):
        return {"kind": self.kind, "point": [self.point.to_complex().real, self.point.to_complex().imag]
                if not self.point.is_infinity else "inf",
                "degree": self.degree, "depth": self.depth, "total_degree": self.total_degree}


class KoenigChart(ChartNode):
    """Koenigs coordinate at a point of a repelling cycle."""

    kind = "koenig"

    def __init__(self, atlas, onode, R):
        super().__init__(atlas, onode, R)
        self.step_multiplier = complex(self.Lnum[1] / self.Lden[0])
        self.sigma = None
        self.pred = None
        self.r0 = None
        self.series = None
        self.series_radius = 0.0

    @property
    def multiplier(self):
        return self.atlas.schedule.cycles[self.cycle_index].multiplier

    def evaluate(self, zeta, max_iter=200):
        """Backward limit sigma^N a_N zeta_N along the inverse branches fixing the cycle."""
        with np.errstate(all="ignore"):
            return self._evaluate(zeta, max_iter)

    def _series(self, y):
        val, der = _horner(y, self.series)
        return val, der

    def set_series(self, coef, tol=1e-17):
        """Install Taylor coefficients and the radius inside which truncation is negligible."""
        self.series = coef
        mags = np.abs(coef[len(coef) // 2:])
        ks = np.arange(len(coef) // 2, len(coef))
        with np.errstate(divide="ignore"):
            radii = (tol * abs(self.a1) / mags) ** (1.0 / (ks - 1))
        self.series_radius = float(np.min(radii[np.isfinite(radii)], initial=np.inf))
        if not np.isfinite(self.series_radius):
            self.series_radius = 1.0 / abs(self.a1)

    def _evaluate(self, zeta, max_iter):
        y = np.array(zeta, dtype=complex, copy=True).ravel()
        dy = np.ones_like(y)
        v = np.full(y.shape, np.nan + 0j)
        dv = np.full(y.shape, np.nan + 0j)
        ok = np.isfinite(y)
        todo = ok.copy()
        node = self
        scale = 1.0 + 0j
        for _ in range(max_iter):
            near = todo & (np.abs(y) <= node.series_radius)
            if near.any():
                val, der = node._series(y[near])
                v[near] = scale * val
                dv[near] = scale * der * dy[near]
                todo &= ~near
            if not todo.any():
                break
            # pull the remaining points one step back along the cycle
            pred = node.pred
            x, good = pred.solve_L(y[todo], y[todo] / pred.step_multiplier)
            _, der = pred.L(x)
            idx = np.nonzero(todo)[0]
            ok[idx[~good]] = False
            todo[idx[~good]] = False
            y[idx] = x
            dy[idx] = dy[idx] / der
            node = pred
            scale *= self.sigma
        else:
            raise PrecisionError("Koenigs backward iteration did not reach the series disk")
        ok &= np.isfinite(v)
        return v.reshape(np.shape(zeta)), dv.reshape(np.shape(zeta)), ok.reshape(np.shape(zeta))

    def inverse(self, w, with_derivative=False):
        """Solve the series model at w / sigma^N, then apply N forward steps of f."""
        w = np.asarray(w, dtype=complex)
        ell = abs(self.sigma)
        k = len(self.cycle_nodes)
        pos = self.cycle_nodes.index(self)
        wmax = float(np.max(np.abs(w), initial=0.0))
        N = 0
        while True:
            start = self.cycle_nodes[(pos - N) % k]
            if wmax / ell ** N <= 0.5 * abs(start.a1) * start.series_radius or N > 2000:
                break
            N += 1
        target = w / self.sigma ** N
        x = target / start.a1
        for _ in range(60):
            val, der = start._series(x)
            step = (val - target) / der
            step = np.where(np.isfinite(step), step, 0)
            x = x - step
            if np.all(np.abs(step) <= 4e-16 * np.maximum(np.abs(x), 1e-300)):
                break
        val, der = start._series(x)
        if np.any(np.abs(val - target) > 1e-13 * np.maximum(np.abs(target), 1e-300)):
            raise PrecisionError("Koenigs series inverse did not converge")
        dx = 1 / der
        node = start
        for _ in range(N):
            val, d = node.L(x)
            dx = dx * d
            x = val
            node = self.atlas.nodes[node.image_index]
        dx = dx / self.sigma ** N
        return (x, dx) if with_derivative else x


class PullbackChart(ChartNode):
    """chi_{f(q)} ∘ f at a non-critical orbit point q."""

    kind = "pullback"

    @property
    def parent(self):
        return self.atlas.nodes[self.image_index]

    def evaluate(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        zp, dzp = self.L(zeta)
        v, dv, ok = self.parent.evaluate(zp)
        return v, dv * dzp, ok & np.isfinite(zp)

    def inverse(self, w, with_derivative=False):
        w = np.asarray(w, dtype=complex)
        target = self.parent.inverse(w)
        seed = self.taylor_inverse(w) if self.taylor is not None else target / self.Lnum[1] * self.Lden[0]
        x, ok = self.solve_L(target, seed)
        if not np.all(ok):
            raise ChartDomainError("inverse branch did not converge")
        if with_derivative:
            _, dchi, _ = self.evaluate(x)
            return x, 1 / dchi
        return x


class CriticalChart(PullbackChart):
    """d-th root of chi_{f(c)} ∘ f at a critical point, branch fixed on a polar grid."""

    kind = "critical"

    def __init__(self, atlas, onode, R):
        super().__init__(atlas, onode, R)
        self.base_angle = None
        self._continuing = False

    def _roots(self, u):
        d = self.degree
        mag = np.abs(u) ** (1.0 / d)
        ang = np.angle(u) / d
        k = np.arange(d)
        return mag[..., None] * np.exp(1j * (ang[..., None] + 2 * np.pi * k / d))

    def _pick(self, u, ref, strict=True):
        cand = self._roots(u)
        dist = np.abs(cand - ref[..., None])
        idx = np.argmin(dist, axis=-1)
        x = np.take_along_axis(cand, idx[..., None], axis=-1)[..., 0]
        sep = np.abs(x) * abs(1 - np.exp(2j * np.pi / self.degree))
        amb = np.take_along_axis(dist, idx[..., None], axis=-1)[..., 0] > 0.45 * sep
        return x, amb

    def evaluate(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        zp, dzp = self.L(zeta)
        v, dv, ok = self.parent.evaluate(zp)
        du = dv * dzp
        ref = zeta * self._grid_reference(zeta)
        x, amb = self._pick(v, ref)
        with np.errstate(divide="ignore", invalid="ignore"):
            dx = np.where(v != 0, x * du / (self.degree * v), self.a1)
        ok = ok & np.isfinite(x) & ~amb
        return x, dx, ok

    def _grid_values(self, Z):
        # continuation outward along each ray: reference = previous ring's chi/zeta
        zp, _ = self.L(Z.ravel())
        v, _, ok = self.parent.evaluate(zp)
        v = v.reshape(Z.shape)
        ok = ok.reshape(Z.shape)
        chi = np.zeros(Z.shape, dtype=complex)
        G = np.full(Z.shape[1], self.a1, dtype=complex)
        for i in range(1, Z.shape[0]):
            x, amb = self._pick(v[i], Z[i] * G)
            ok[i] &= ~amb
            chi[i] = x
            G = np.where(ok[i], x / Z[i], G)
        return chi, ok

    def inverse(self, w, with_derivative=False):
        w = np.asarray(w, dtype=complex)
        target = self.parent.inverse(w ** self.degree)
        seed = self.taylor_inverse(w)
        x, ok = self.solve_L(target, seed)
        zero = w == 0
        x = np.where(zero, 0, x)
        if not np.all(ok | zero):
            raise ChartDomainError("critical chart inverse did not converge")
        chi, dchi, okc = self.evaluate(x)
        wrong = ~zero & (np.abs(chi - w) > 1e-8 * np.maximum(np.abs(w), 1e-300))
        if np.any(wrong):
            raise BranchError("critical chart inverse landed on another branch")
        if with_derivative:
            return x, np.where(zero, 1 / self.a1, 1 / np.where(zero, 1, dchi))
        return x


class ChartAtlas:
    """All charts for one map, built at a common normalisation scale."""

    def __init__(self, R: RationalFunction, schedule: OrbitSchedule | None = None, r0=None,
                 mu=0.01, min_r0=2.0 ** -20, grids=None):
        self.R = R
        if R.degree < 2:
            raise ConfigError("map has degree 1: no critical points to extend around")
        self.schedule = schedule or classify_postcritical(R, find_critical_points(R))
        if not self.schedule.expanding:
            raise ConfigError("map is not expanding (periodic critical point)")
        self.mu = mu
        self.ell = [cyc.step_modulus for cyc in self.schedule.cycles]
        self.koebe = {}
        trial = 0.5 if r0 is None else r0
        last_error = None
        while trial >= min_r0:
            try:
                self._build(trial, grids)
                if r0 is None:
                    self._check_conditions()
                last_error = None
                break
            except (ChartDomainError, BranchError, PrecisionError, _Reject) as exc:
                last_error = exc
                if r0 is not None:
                    raise
                trial /= 2
                grids = None
        if last_error is not None or trial < min_r0:
            raise ConfigError(f"no chart radius down to 2^-20 satisfies the conditions ({last_error})")
        self.r0 = trial

    # ---- construction
    def _build(self, r0, grids=None):
        sch = self.schedule
        self.nodes = [None] * len(sch.nodes)
        for nd in sch.nodes:
            if nd.cycle >= 0:
                self.nodes[nd.index] = KoenigChart(self, nd, self.R)
        for cid, cyc in enumerate(sch.cycles):
            members = [self.nodes[i] for i in cyc.nodes]
            k = len(members)
            sigma = cyc.multiplier ** (1.0 / k) if k > 1 else cyc.multiplier
            members[0].a1 = 1.0 / r0 + 0j
            for j in range(1, k):
                prev = members[j - 1]
                members[j].a1 = sigma * prev.a1 / prev.step_multiplier
            coef = koenig_series(members, sigma)
            for j, m in enumerate(members):
                m.set_series(coef[j])
                m.sigma = sigma
                m.pred = members[j - 1]
                m.cycle_nodes = members
                m.r0 = r0
        for nd in sorted(sch.nodes, key=lambda n: n.depth):
            if nd.cycle >= 0:
                continue
            cls = CriticalChart if nd.degree > 1 else PullbackChart
            ch = cls(self, nd, self.R)
            parent = self.nodes[nd.image]
            if nd.degree == 1:
                ch.a1 = parent.a1 * ch.lead
            else:
                ch.a1 = complex((parent.a1 * ch.lead) ** (1.0 / nd.degree))
                ch.base_angle = float(np.angle(ch.a1))
            self.nodes[nd.index] = ch
        order = sorted(range(len(self.nodes)), key=lambda i: self.nodes[i].depth)
        for i in order:
            node = self.nodes[i]
            if grids is not None and i in grids:
                node.grid, node.grid_radius, node.exit_radius, node.sph_radius = grids[i]
                node._fit_taylor()
            else:
                node.build_grid()

    def _check_conditions(self):
        # Koebe-type distortion of the inverse cycle charts on the closed unit disk
        for cid, cyc in enumerate(self.schedule.cycles):
            D = max([self.schedule.nodes[c].total_degree for c in self.schedule.critical
                     if self.nodes[c].cycle_of() == cid] or [1])
            for i in cyc.nodes:
                K1, K2 = koebe_constants(self.nodes[i])
                growth = self.ell[cid] ** (1.0 / D)
                self.koebe[i] = (K1, K2, D)
                if not (K1 * growth >= 1 + self.mu and growth > K2):
                    raise _Reject(f"Koebe constants K1={K1:.4f}, K2={K2:.4f} too large for growth {growth:.4f}")
        # pairwise disjoint base neighbourhoods
        for i, p in enumerate(self.nodes):
            for q in self.nodes[i + 1:]:
                dist = float(sph_dist_h(p.point.a, p.point.b, q.point.a, q.point.b))
                if dist <= 1.05 * (p.sph_radius + q.sph_radius):
                    raise _Reject(f"neighbourhoods of nodes {p.index} and {q.index} overlap")

    # ---- queries
    @property
    def critical_nodes(self):
        return [self.nodes[i] for i in self.schedule.critical]

    def owner(self, a, b, nodes=None):
        """Index of the node whose base neighbourhood contains each point (-1 if none) and its chart data."""
        a = np.atleast_1d(np.asarray(a, dtype=complex))
        b = np.atleast_1d(np.asarray(b, dtype=complex))
        own = np.full(a.shape, -1)
        chi = np.full(a.shape, np.nan + 0j)
        dchi = np.full(a.shape, np.nan + 0j)
        zeta = np.full(a.shape, np.nan + 0j)
        for node in (self.nodes if nodes is None else nodes):
            ins, zl, c, dc = node.chart_on_sphere(a, b)
            ins &= own < 0
            own[ins] = node.index
            chi[ins], dchi[ins], zeta[ins] = c[ins], dc[ins], zl[ins]
        return own, zeta, chi, dchi

    def level_of(self, node, chi, n_max):
        """Largest n with |chi| <= ell^{-(n-k)/D}; boundary counts as inside."""
        mag = np.abs(chi)
        with np.errstate(divide="ignore"):
            m = -node.total_degree * np.log(mag) / np.log(node.ell)
        lvl = node.depth + np.floor(m + 1e-9)
        return np.where(mag == 0, n_max, np.minimum(lvl, n_max)).astype(int)

    def grids(self):
        return {i: (n.grid, n.grid_radius, n.exit_radius, n.sph_radius) for i, n in enumerate(self.nodes)}


class _Reject(Exception):
    pass


def koebe_constants(chart: ChartNode, n_radial=12, n_angle=48):
    """Fitted (K1, K2): min and max ratio of (chi^{-1})^# over the closed unit disk."""
    r = np.linspace(0, 1, n_radial)
    th = 2 * np.pi * np.arange(n_angle) / n_angle
    W = (r[:, None] * np.exp(1j * th)[None, :]).ravel()
    x, dx = chart.inverse(W, with_derivative=True)
    val = np.abs(dx) / chart.coord.metric_factor(x)
    return float(val.min() / val.max()), float(val.max() / val.min())


# ---------------------------------------------------------------- single-point wrappers


def koenig_forward(chart: KoenigChart, z):
    """psi(z) for a point of the base neighbourhood, rescaled so that psi(U_p^0) is the unit disk."""
    a, b = as_hom(z)
    zeta = chart.coord.to_local(a, b)
    v, _, ok = chart.evaluate(np.atleast_1d(zeta))
    if not np.all(ok):
        raise ChartDomainError("point outside the domain of the inverse branch")
    return complex(v[0]) if np.ndim(zeta) == 0 else v


def koenig_inverse(chart: ChartNode, w):
    w = np.asarray(w, dtype=complex)
    if np.any(np.abs(w) > 1 + 1e-12):
        raise ChartDomainError("|w| > 1")
    zeta = chart.inverse(np.atleast_1d(w))
    a, b = chart.coord.from_local(zeta)
    if w.ndim == 0:
        return SpherePoint(complex(a[0]), complex(b[0]))
    return a, b


def critical_phi(chart: CriticalChart, z):
    a, b = as_hom(z)
    zeta = chart.coord.to_local(a, b)
    v, _, ok = chart.evaluate(np.atleast_1d(zeta))
    if not np.all(ok):
        raise BranchError("branch could not be resolved at this point")
    return complex(v[0]) if np.ndim(zeta) == 0 else v


def neighborhood_level(atlas: ChartAtlas, z, n_max=12):
    """(owner node index or None, level) for a single point."""
    a, b = as_hom(z)
    own, zeta, chi, _ = atlas.owner(a, b)
    if own[0] < 0:
        return None, -1
    node = atlas.nodes[own[0]]
    return int(own[0]), int(atlas.level_of(node, chi[0], n_max))


def choose_chart_radius(chart_factory, d=2, mu=0.01, min_r0=2.0 ** -20):
    """Largest dyadic r0 whose inverse chart satisfies the Koebe growth conditions.

    ``chart_factory(r0)`` returns a chart with attributes ``ell`` (per-step
    expansion) and an ``inverse`` method.
    """
    r0 = 0.5
    while r0 >= min_r0:
        chart = chart_factory(r0)
        K1, K2 = koebe_constants(chart)
        growth = chart.ell ** (1.0 / d)
        if K1 * growth >= 1 + mu and growth > K2:
            return r0, (K1, K2)
        r0 /= 2
    raise ConfigError("no dyadic radius down to 2^-20 satisfies the Koebe conditions")


# ---------------------------------------------------------------- cache file

MAGIC = b"QRX1"


def write_chart_cache(path, map_hash, chart_id, r0, lam, grid, extra=None):
    head = {"map_hash": map_hash, "chart_id": chart_id, "r0": r0,
            "lambda": [complex(lam).real, complex(lam).imag], "grid": list(grid.shape)}
    head.update(extra or {})
    header = json.dumps(head, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(grid, dtype="<c16").tobytes())


def read_chart_cache(path):
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ConfigError(f"{path}: not a chart cache file")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n).decode())
        data = np.frombuffer(fh.read(), dtype="<c16")
    grid = data.reshape(header["grid"]).copy()
    return header, grid


def save_atlas(atlas: ChartAtlas, directory, map_hash: str):
    """One cache file per chart node: the polar grid of chi/zeta plus its geometry."""
    import os
    os.makedirs(directory, exist_ok=True)
    for node in atlas.nodes:
        lam = atlas.schedule.cycles[node.cycle_of()].multiplier
        write_chart_cache(os.path.join(directory, f"chart_{node.index}.qrx"), map_hash, node.index,
                          atlas.r0, lam, node.grid,
                          {"grid_radius": node.grid_radius, "exit_radius": list(map(float, node.exit_radius)),
                           "sph_radius": node.sph_radius})


def load_atlas(R: RationalFunction, directory, map_hash: str, mu=0.01):
    """Rebuild an atlas from cached grids; raises ConfigError if any file is missing or stale."""
    import os
    grids = {}
    r0 = None
    schedule = classify_postcritical(R)
    for i in range(len(schedule.nodes)):
        path = os.path.join(directory, f"chart_{i}.qrx")
        if not os.path.isfile(path):
            raise ConfigError(f"cache file {path} missing")
        header, grid = read_chart_cache(path)
        if header["map_hash"] != map_hash or header["chart_id"] != i:
            raise ConfigError(f"cache file {path} belongs to another map")
        r0 = header["r0"]
        grids[i] = (grid, header["grid_radius"], np.array(header["exit_radius"]), header["sph_radius"])
    return ChartAtlas(R, schedule=schedule, r0=r0, mu=mu, grids=grids)
