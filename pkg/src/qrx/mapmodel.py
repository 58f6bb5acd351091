"""Critical points, postcritical orbits and multipliers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import ClassificationError, DomainError, NumericError
from .sphere import INF, RationalFunction, SpherePoint, as_hom, format_point, local_map, sph_dist


@dataclass(frozen=True)
class CriticalDatum:
    point: SpherePoint
    degree: int


def _refine_root(coeffs, z, order):
    """Newton on the (order)-th derivative, where a cluster of order+1 roots is simple."""
    c = coeffs
    for _ in range(order):
        c = npoly.polyder(c)
    dc = npoly.polyder(c)
    for _ in range(20):
        step = npoly.polyval(z, c) / npoly.polyval(z, dc)
        if not np.isfinite(step):
            break
        z = z - step
        if abs(step) < 1e-16 * (1 + abs(z)):
            break
    return z


def find_critical_points(R: RationalFunction, cluster_tol=1e-5):
    n = R.degree
    W = npoly.polysub(npoly.polymul(R._dnum, R.den), npoly.polymul(R.num, R._dden))
    W = np.atleast_1d(W)
    scale = np.abs(W).max() if W.size else 0.0
    if scale == 0:
        deg_w = -1
    else:
        nz = np.nonzero(np.abs(W) > 1e-13 * scale)[0]
        deg_w = int(nz[-1])
        W = W[: deg_w + 1] / scale
    out = []
    if deg_w > 0:
        roots = np.roots(W[::-1])
        if not np.all(np.isfinite(roots)):
            raise NumericError("critical-point root finder failed")
        used = np.zeros(len(roots), bool)
        for i in range(len(roots)):
            if used[i]:
                continue
            members = np.nonzero((~used) & (np.abs(roots - roots[i]) < cluster_tol * (1 + abs(roots[i]))))[0]
            used[members] = True
            m = len(members)
            z = _refine_root(W, roots[members].mean(), m - 1)
            resid = abs(npoly.polyval(z, npoly.polyder(W, m - 1))) if m > 1 else abs(npoly.polyval(z, W))
            if resid > 1e-8 * (1 + abs(z)) ** max(deg_w, 1):
                raise NumericError(f"critical point near {z} not converged (residual {resid:.2e})")
            out.append(CriticalDatum(SpherePoint.of(z), m + 1))
    at_inf = (2 * n - 2) - max(deg_w, 0)
    if at_inf > 0:
        out.append(CriticalDatum(INF, at_inf + 1))
    if sum(c.degree - 1 for c in out) != 2 * n - 2:
        raise NumericError("Riemann–Hurwitz count violated")
    return out


@dataclass
class OrbitNode:
    index: int
    point: SpherePoint
    image: int = -1
    degree: int = 1
    cycle: int = -1  # index into OrbitSchedule.cycles, -1 if strictly preperiodic
    depth: int = 0  # steps until the cycle is reached
    total_degree: int = 1  # product of local degrees from here to the cycle

    @property
    def is_critical(self):
        return self.degree > 1


@dataclass
class Cycle:
    nodes: list
    multiplier: complex  # of f^k at any cycle point
    step_multipliers: list = field(default_factory=list)

    @property
    def period(self):
        return len(self.nodes)

    @property
    def step_modulus(self):
        """|Λ|^{1/k}: the per-step expansion used to index the neighbourhood levels."""
        return abs(self.multiplier) ** (1.0 / self.period)


@dataclass
class OrbitSchedule:
    nodes: list
    cycles: list
    critical: list  # node indices of critical points
    orbits: dict  # critical node index -> list of node indices up to the cycle entry
    tags: dict  # critical node index -> list of case tags
    legs: dict  # critical node index -> steps to the next critical point or cycle
    expanding: bool
    tag: str

    def node_of(self, z, tol=1e-9):
        for nd in self.nodes:
            if sph_dist(nd.point, z) < tol:
                return nd.index
        return -1

    def summary(self) -> str:
        def label(i):
            return format_point(self.nodes[i].point)

        chains = []
        covered = set()
        # longest orbits first so that sub-orbits are not repeated
        for c in sorted(self.orbits, key=lambda i: -len(self.orbits[i])):
            path = self.orbits[c]
            if c in covered:
                continue
            covered.update(path)
            cyc = self.cycles[self.nodes[path[-1]].cycle]
            steps = [label(i) for i in path]
            if cyc.period > 1:
                start = cyc.nodes.index(path[-1])
                rest = [label(cyc.nodes[(start + j) % cyc.period]) for j in range(1, cyc.period)]
                steps += rest
                kind = f"period {cyc.period}, |Λ|={abs(cyc.multiplier):.6g}"
            else:
                kind = f"fixed, |λ|={abs(cyc.multiplier):.6g}"
            chains.append("→".join(steps) + f" ({kind})")
        return f"expanding: {str(self.expanding).lower()}; postcritical: " + (", ".join(chains) or "none")


def multiplier(R: RationalFunction, p, k: int = 1, tol=1e-9) -> complex:
    """Derivative of R^k at a fixed point of R^k, in the chart w = 1/z at ∞."""
    p = SpherePoint.of(p)
    pts = [p]
    for _ in range(k):
        pts.append(R(pts[-1]))
    if sph_dist(pts[-1], p) > tol:
        raise DomainError(f"{format_point(p)} is not a fixed point of f^{k}")
    lam = 1.0 + 0j
    for j in range(k):
        target = pts[j + 1] if j + 1 < k else p
        L = local_map(R, pts[j], target)
        lam *= complex(L.affine(0.0)[1])
    return lam


def classify_postcritical(R: RationalFunction, crit=None, tol=1e-9, max_steps=64) -> OrbitSchedule:
    if crit is None:
        crit = find_critical_points(R)
    nodes: list[OrbitNode] = []

    def find(z):
        for nd in nodes:
            if sph_dist(nd.point, z) < tol:
                return nd.index
        return -1

    for c in crit:
        i = find(c.point)
        if i < 0:
            nodes.append(OrbitNode(len(nodes), c.point, degree=c.degree))
        else:
            nodes[i].degree = c.degree
    critical = [find(c.point) for c in crit]

    for c in critical:
        cur = c
        for _ in range(max_steps):
            if nodes[cur].image >= 0:
                break
            w = R(nodes[cur].point)
            if abs(w.b) < 1e-13:
                w = INF  # rounding residue of a pole
            j = find(w)
            if j < 0:
                nodes.append(OrbitNode(len(nodes), w))
                j = len(nodes) - 1
            nodes[cur].image = j
            cur = j
        else:
            raise ClassificationError(
                f"orbit of {format_point(nodes[c].point)} does not close within {max_steps} steps")

    # cycles: iterate the image pointer from each node until repetition
    cycles: list[Cycle] = []
    for nd in nodes:
        seen = []
        cur = nd.index
        while cur not in seen:
            seen.append(cur)
            cur = nodes[cur].image
        loop = seen[seen.index(cur):]
        if nodes[loop[0]].cycle < 0:
            cid = len(cycles)
            for i in loop:
                nodes[i].cycle = cid
            cycles.append(Cycle(loop, 0j))
    expanding = not any(nodes[c].cycle >= 0 for c in critical)

    for cyc in cycles:
        steps = []
        for j, i in enumerate(cyc.nodes):
            nxt = cyc.nodes[(j + 1) % cyc.period]
            L = local_map(R, nodes[i].point, nodes[nxt].point)
            steps.append(complex(L.affine(0.0)[1]))
        cyc.step_multipliers = steps
        cyc.multiplier = complex(np.prod(steps))

    # depth and total degree by walking toward the cycle
    def settle(i):
        nd = nodes[i]
        if nd.cycle >= 0:
            nd.depth, nd.total_degree = 0, 1
            return nd
        nxt = settle(nd.image)
        nd.depth = nxt.depth + 1
        nd.total_degree = nd.degree * nxt.total_degree
        return nd

    for nd in nodes:
        settle(nd.index)

    orbits, tags, legs = {}, {}, {}
    for c in critical:
        path = [c]
        while nodes[path[-1]].cycle < 0:
            path.append(nodes[path[-1]].image)
        orbits[c] = path
        t = []
        if nodes[c].cycle >= 0:
            t.append("periodic-critical")
        else:
            cyc = cycles[nodes[path[-1]].cycle]
            if cyc.period > 1:
                t.append("periodic-cycle")
            if any(nodes[i].degree == 1 for i in path[1:-1]):
                t.append("chain")
            if any(nodes[i].degree > 1 for i in path[1:]):
                t.append("chained-critical")
            if not t:
                t.append("fixed-value")
        tags[c] = t
        leg = 1
        while leg < len(path) - 1 and nodes[path[leg]].degree == 1:
            leg += 1
        legs[c] = leg
    order = ["periodic-critical", "periodic-cycle", "chain", "chained-critical", "fixed-value"]
    all_tags = {t for ts in tags.values() for t in ts}
    tag = next((t for t in order if t in all_tags), "none")
    if expanding:
        for cyc in cycles:
            if abs(cyc.multiplier) <= 1:
                raise ClassificationError(f"cycle with |multiplier| = {abs(cyc.multiplier):.6g} is not repelling")
    return OrbitSchedule(nodes, cycles, critical, orbits, tags, legs, expanding, tag)
