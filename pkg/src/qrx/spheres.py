"""Radius fields r_n = 1 - s/|D(f_1 ∘ … ∘ f_n)|, approximating spheres and meshes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GrowthError, WindowError
from .modified import ModifiedMapFamily, period
from .sphere import as_hom, normalize, r3_to_sphere, sphere_to_r3

TIE_TOL = 1e-12


# ---------------------------------------------------------------- icosphere


def icosphere(level: int):
    """Vertices on the unit sphere and triangular faces (0-based) of a subdivided icosahedron."""
    if level < 0:
        raise DomainError("subdivision level must be non-negative")
    phi = (1 + 5 ** 0.5) / 2
    verts = [(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
             (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
             (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    V = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        mid = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in mid:
                m = V[i] + V[j]
                V.append(m / np.linalg.norm(m))
                mid[key] = len(V) - 1
            return mid[key]

        new = []
        for i, j, k in faces:
            a, b, c = midpoint(i, j), midpoint(j, k), midpoint(k, i)
            new += [(i, a, c), (j, b, a), (k, c, b), (a, b, c)]
        faces = new
    return np.array(V), np.array(faces, dtype=int)


def sphere_grid(level: int, extra=()):
    """Homogeneous icosphere vertices, with extra points (e.g. critical points) appended."""
    V, _ = icosphere(level)
    a, b = r3_to_sphere(V)
    if extra:
        ea, eb = zip(*[as_hom(p) for p in extra])
        a = np.concatenate([a, np.array(ea, dtype=complex)])
        b = np.concatenate([b, np.array(eb, dtype=complex)])
    return normalize(a, b)


# ---------------------------------------------------------------- radius field


@dataclass
class PrismCoords:
    z: object
    n: int
    m: int
    t: float
    height: float | None = None


class RadiusField:
    """Radii r_n on the sphere, calibrated on an icosphere grid.

    ``geometric=True`` (periodic cycles only) replaces d_n between whole cycle
    passes by the geometric mean of the neighbouring pass values.
    """

    def __init__(self, family: ModifiedMapFamily, grid_level: int = 4, n_max: int = 12,
                 s: float | None = None, window: int = 6, geometric: bool = False,
                 calibration: dict | None = None):
        self.family = family
        self.n_max = n_max
        self.window = window
        self.geometric = geometric and period(family) > 1
        family.n_max = max(family.n_max, n_max + window + period(family) + 1)
        sch = family.schedule
        extra = [nd.point for nd in sch.nodes]
        self.grid = sphere_grid(grid_level, extra)
        self._grid_norms = {}
        if calibration is not None:
            # values from a previous build of the same map and grid
            self.growth_table = {int(k): float(v) for k, v in calibration["growth_table"].items()}
            self.growth_index = int(calibration["growth_index"])
            self.s = float(calibration["s"])
            self.r0 = float(calibration["r0"])
            return
        self.growth_table = {n: float(self.grid_norms(n).min()) for n in range(1, n_max + 1)}
        self.growth_index = self._growth_index()
        self.s = calibrate_s(self.growth_table, self.growth_index) if s is None else float(s)
        self.r0 = 0.5 * min(float(self.grid_radius(n).min()) for n in range(1, n_max + 1))

    def calibration(self):
        return {"growth_table": {str(k): v for k, v in self.growth_table.items()},
                "growth_index": self.growth_index, "s": self.s, "r0": self.r0}

    def _growth_index(self):
        ns = sorted(self.growth_table)
        for n in ns:
            if self.growth_table[n] > 1 and all(self.growth_table[m] < self.growth_table[m + 1]
                                                for m in ns if n <= m < ns[-1]):
                return n
        raise GrowthError("composition norms do not grow past 1 on the grid within n_max")

    # ---- norms and radii
    def grid_norms(self, n):
        if n not in self._grid_norms:
            mx, _ = self.family.compose_norms(n, *self.grid)
            self._grid_norms[n] = mx
        return self._grid_norms[n]

    def norms(self, n, a, b):
        return self.family.compose_norms(n, a, b)[0]

    def distance(self, n, a, b):
        """d_n at homogeneous points."""
        a = np.atleast_1d(np.asarray(a, dtype=complex))
        b = np.atleast_1d(np.asarray(b, dtype=complex))
        if n < 0:
            raise DomainError("negative sphere index")
        if n == 0:
            return np.full(a.shape, 1 - self.r0)
        if self.geometric:
            k = period(self.family)
            m, j = divmod(n, k)
            if j:
                lo = self.distance(k * m, a, b)
                hi = self.distance(k * (m + 1), a, b)
                return lo * (hi / lo) ** (j / k)
        return self.s / self.norms(n, a, b)

    def radius(self, n, a, b):
        return 1 - self.distance(n, a, b)

    def grid_radius(self, n):
        if n == 0:
            return np.full(self.grid[0].shape, self.r0)
        if self.geometric:
            return self.radius(n, *self.grid)
        return 1 - self.s / self.grid_norms(n)

    def radii_window(self, n, a, b):
        """{j: r_j} for j within the consecutive-index window around n."""
        lo = max(0, n - self.window)
        return {j: self.radius(j, a, b) for j in range(lo, n + self.window + 1)}


def calibrate_s(growth_table: dict, growth_index: int | None = None) -> float:
    """s = 1 when every norm up to the growth index exceeds 1, else 0.9 times the smallest norm."""
    ns = sorted(growth_table)
    if growth_index is None:
        growth_index = next((n for n in ns if growth_table[n] > 1), None)
        if growth_index is None:
            raise GrowthError("composition norms never exceed 1")
    low = min(growth_table[n] for n in ns if n <= growth_index)
    low = min(low, min(growth_table.values()))
    if low > 1:
        return 1.0
    return 0.9 * low


def radius_and_distance(field: RadiusField, n: int, z):
    if not 0 <= n <= field.n_max + field.window:
        raise DomainError("sphere index out of range")
    a, b = as_hom(z)
    d = field.distance(n, a, b)
    r = 1 - d
    if np.ndim(a) == 0:
        return float(r[0]), float(d[0])
    return r, d


def consecutive_index(field: RadiusField, n: int, z, radii=None):
    """Index m != n with the smallest radius above r_n(z) in the window; ties go to the smaller index."""
    a, b = as_hom(z)
    a = np.atleast_1d(a)
    b = np.atleast_1d(b)
    radii = radii or field.radii_window(n, a, b)
    rn = radii[n]
    best = np.full(a.shape, -1)
    best_r = np.full(a.shape, np.inf)
    for j in sorted(radii):
        if j == n:
            continue
        rj = radii[j]
        above = rj > rn + TIE_TOL
        better = above & (rj < best_r - TIE_TOL)
        best = np.where(better, j, best)
        best_r = np.where(better, rj, best_r)
    if np.any(best < 0):
        raise WindowError(f"no consecutive index within ±{field.window} of {n}")
    return int(best[0]) if np.ndim(z) == 0 or hasattr(z, "is_infinity") else best


def rho_interp(field: RadiusField, coords: PrismCoords):
    a, b = as_hom(coords.z)
    rn = field.radius(coords.n, a, b)
    rm = field.radius(coords.m, a, b)
    q = coords.height
    t = coords.t
    if q is None:
        out = (1 - t) * rn + t * rm
    else:
        out = (q - t) / q * rn + t / q * rm
    return float(out[0]) if out.size == 1 else out


def compute_N0(field: RadiusField, grid=None, mode="pointwise", margin=1e-6):
    """Smallest N >= 2 with S_1 strictly inside S_N on the grid.

    ``pointwise`` compares r_N(z) > r_1(z) at each grid point; ``global``
    requires min r_N > max r_1.
    """
    a, b = grid if grid is not None else field.grid
    r1 = field.radius(1, a, b) if grid is not None else field.grid_radius(1)
    for N in range(2, field.n_max + 1):
        rN = field.radius(N, a, b) if grid is not None else field.grid_radius(N)
        ok = np.all(rN > r1 + margin) if mode == "pointwise" else rN.min() > r1.max() + margin
        if ok:
            return N
    raise WindowError("no sphere index separates S_1 within n_max")


def compute_N0_from_arrays(radii: dict, mode="pointwise", margin=1e-6):
    """Same rule on precomputed grids {n: r_n}."""
    r1 = radii[1]
    for N in sorted(k for k in radii if k >= 2):
        rN = radii[N]
        ok = np.all(rN > r1 + margin) if mode == "pointwise" else rN.min() > r1.max() + margin
        if ok:
            return N
    raise WindowError("no sphere index separates S_1 within the supplied range")


# ---------------------------------------------------------------- meshes


@dataclass
class ApproxSphereMesh:
    n: int
    vertices: np.ndarray  # (V, 3) points in R^3
    faces: np.ndarray  # (F, 3) 0-based
    radii: np.ndarray

    @property
    def euler_characteristic(self):
        edges = {tuple(sorted(e)) for f in self.faces for e in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0]))}
        return len(self.vertices) - len(edges) + len(self.faces)


def mesh_sphere(field: RadiusField, n: int, subdivision_level: int) -> ApproxSphereMesh:
    V, F = icosphere(subdivision_level)
    a, b = r3_to_sphere(V)
    r = field.radius(n, a, b)
    X = sphere_to_r3(a, b) * r[:, None]
    return ApproxSphereMesh(n, X, F, r)


def write_obj(meshes, path):
    """One OBJ object per mesh; face indices continue across objects."""
    offset = 0
    with open(path, "w") as fh:
        for mesh in meshes:
            fh.write(f"o S_{mesh.n}\n")
            for x, y, z in mesh.vertices:
                fh.write(f"v {x:.12g} {y:.12g} {z:.12g}\n")
            for i, j, k in mesh.faces + 1 + offset:
                fh.write(f"f {i} {j} {k}\n")
            offset += len(mesh.vertices)


# ---------------------------------------------------------------- monotonicity near critical orbits


def sample_level_set(node, radius, rng, count):
    """Points of chi^{-1}(disk of the given radius), uniform in the chart."""
    w = radius * np.sqrt(rng.random(count)) * np.exp(2j * np.pi * rng.random(count))
    zeta = node.inverse(w)
    return node.coord.from_local(zeta)


def critical_monotonicity_report(field: RadiusField, node_index: int, n_range, samples=64, seed=0,
                                 ratio_bound=50.0):
    """Fit a, b in a d_n <= r_{n+1} - r_n <= b d_n over samples of U_c^n."""
    fam = field.family
    node = fam.atlas.nodes[node_index]
    rng = np.random.default_rng(seed)
    lo, hi = np.inf, -np.inf
    per_n = {}
    for n in n_range:
        a, b = sample_level_set(node, fam.level_radius(node, n), rng, samples)
        dn = field.distance(n, a, b)
        gap = field.radius(n + 1, a, b) - (1 - dn)
        ratio = gap / dn
        per_n[n] = (float(ratio.min()), float(ratio.max()))
        lo, hi = min(lo, ratio.min()), max(hi, ratio.max())
    ok = bool(lo > 0 and hi / lo < ratio_bound)
    return {"node": node_index, "a": float(lo), "b": float(hi), "per_n": per_n, "pass": ok}
