"""Numerical distortion estimates and the continuity and Koebe checks."""
from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, EvaluationError
from .extension import ExtensionDomain
from .sphere import RationalFunction, as_hom, normalize, r3_to_sphere, sph_dist_h, sphere_to_r3

DEFAULT_EPS = tuple(1e-2 * 0.5 ** j for j in range(7))


def fibonacci_directions(count=64):
    """Nearly uniform unit vectors in R^3 (golden-angle spiral)."""
    i = np.arange(count) + 0.5
    h = 1 - 2 * i / count
    rad = np.sqrt(1 - h ** 2)
    ang = math.pi * (3 - math.sqrt(5)) * i
    return np.stack([rad * np.cos(ang), rad * np.sin(ang), h], axis=1)


def circle_directions(count=64):
    return np.exp(2j * np.pi * np.arange(count) / count)


def _ratio(images, centre):
    d = np.linalg.norm(images - centre, axis=-1)
    if np.any(d == 0):
        return np.inf
    return float(d.max() / d.min())


def estimate_distortion(mapfn, x, eps_schedule=DEFAULT_EPS, directions=64):
    """(K_hat, ratios per epsilon) for a map of R^3 (arrays of rows) or of the plane (complex arrays)."""
    planar = np.iscomplexobj(x) or isinstance(x, complex)
    eps_schedule = sorted(eps_schedule, reverse=True)
    if planar:
        x = complex(x)
        dirs = circle_directions(directions)
        centre = np.atleast_1d(mapfn(np.array([x])))
        ratios = []
        for eps in eps_schedule:
            img = np.atleast_1d(mapfn(x + eps * dirs))
            pts = np.stack([img.real, img.imag], -1)
            ratios.append(_ratio(pts, np.array([centre[0].real, centre[0].imag])))
    else:
        x = np.asarray(x, dtype=float)
        dirs = fibonacci_directions(directions)
        centre = np.asarray(mapfn(x[None, :]))[0]
        ratios = []
        for eps in eps_schedule:
            img = np.asarray(mapfn(x[None, :] + eps * dirs))
            ratios.append(_ratio(img, centre))
    return max(ratios[-3:]), dict(zip(eps_schedule, ratios))


def log_slope(ns, values):
    ns = np.asarray(ns, float)
    y = np.log(np.asarray(values, float))
    if not np.all(np.isfinite(y)):
        return math.inf
    return float(np.polyfit(ns, y, 1)[0])


# ---------------------------------------------------------------- uniformity of iterates


def sample_shell(domain: ExtensionDomain, count: int, depth: int, seed=0):
    """Points between S_{N0+depth} and the next sphere, away from critical axes."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(count * 3, 3))
    a, b = r3_to_sphere(X)
    keep = np.ones(a.shape, bool)
    for node in domain.family.critical_nodes:
        keep &= sph_dist_h(a, b, node.point.a, node.point.b) > 1e-6
    a, b = a[keep][:count], b[keep][:count]
    n = domain.N0 + depth
    lo = domain.radius(n, a, b)
    hi = domain.radius(n + 1, a, b)
    t = rng.uniform(0.1, 0.9, size=a.shape)
    r = (1 - t) * lo + t * hi
    return sphere_to_r3(a, b) * r[:, None]


def naive_extension(R: RationalFunction):
    """(z, r) -> (f(z), r): conformal on spheres, radially flat, so iterates lose uniformity."""
    def apply(X):
        X = np.atleast_2d(X)
        r = np.linalg.norm(X, axis=1)
        a, b = r3_to_sphere(X)
        na, nb = R.eval_h(a, b)
        return sphere_to_r3(na, nb) * r[:, None]
    return apply


def stretch_control(factor=2.0):
    """Linear map diag(factor, 1, 1): quasiregular with K(F^n) = factor^n, a detector check."""
    scale = np.array([factor, 1.0, 1.0])

    def apply(X):
        return np.atleast_2d(X) * scale
    return apply


def uniform_K_report(step, samples, n_max=8, eps_rel=DEFAULT_EPS, directions=64, in_domain=None):
    """K_hat of the iterates of ``step`` (a map of R^3 rows) at each sample, n = 1..n_max.

    Probe radii are eps * (1 - |x|) so that they scale with the distance to the
    unit sphere.  Only the three smallest eps enter K_hat, so only those are
    probed.  All probe clouds are pushed through ``step`` together;
    ``in_domain`` returns a boolean per row, and a sample is dropped as soon
    as any of its probes leaves the domain.
    """
    samples = np.atleast_2d(samples)
    dirs = fibonacci_directions(directions)
    eps_rel = sorted(eps_rel, reverse=True)[-3:]
    size = 1 + len(eps_rel) * directions
    clouds = []
    for x in samples:
        scale = abs(1 - np.linalg.norm(x)) or 1.0
        clouds.append(np.concatenate([x[None, :]] + [x[None, :] + e * scale * dirs for e in eps_rel]))
    pts = np.concatenate(clouds)
    alive = np.ones(len(samples), bool)
    notes = [None] * len(samples)
    K = np.full((len(samples), n_max), np.nan)
    for n in range(1, n_max + 1):
        if in_domain is not None:
            ok = in_domain(pts).reshape(len(samples), size).all(axis=1)
            for i in np.nonzero(alive & ~ok)[0]:
                notes[i] = f"dropped at n={n}: probe cloud left the domain"
            alive &= ok
        rows = np.repeat(alive, size)
        if not alive.any():
            break
        try:
            pts[rows] = step(pts[rows])
        except (DomainError, EvaluationError) as exc:
            for i in np.nonzero(alive)[0]:
                notes[i] = f"dropped at n={n}: {exc}"
            alive[:] = False
            break
        for i in np.nonzero(alive)[0]:
            cloud = pts[i * size:(i + 1) * size]
            ratios = [_ratio(cloud[1 + j * directions:1 + (j + 1) * directions], cloud[0])
                      for j in range(len(eps_rel))]
            K[i, n - 1] = max(ratios)
    per_sample = [{"index": i, "x": samples[i].tolist(),
                   "K": [float(v) for v in K[i] if not np.isnan(v)], "note": notes[i]}
                  for i in range(len(samples))]
    kept = alive
    agg = {n: float(K[kept, n - 1].max()) if kept.any() else math.nan for n in range(1, n_max + 1)}
    ns = sorted(agg)
    slope = log_slope(ns, [agg[n] for n in ns]) if kept.any() else math.nan
    finite = bool(kept.any()) and all(math.isfinite(agg[n]) for n in ns)
    return {"per_sample": per_sample,
            "aggregate": {"K_by_n": agg, "slope": slope, "max_K": max(agg.values()) if kept.any() else math.nan,
                          "kept": int(kept.sum()), "dropped": int((~kept).sum())},
            "finite": finite}


def extension_step(domain: ExtensionDomain, **kw):
    def apply(X):
        return domain.extend_r3(X, check_axis=False, **kw)
    return apply


def extension_in_domain(domain: ExtensionDomain):
    def check(X):
        r = np.linalg.norm(X, axis=1)
        a, b = r3_to_sphere(X)
        rin = np.where(r > 1, 1 / r, r)
        return domain.in_domain(a, b, rin)
    return check


# ---------------------------------------------------------------- Koebe


def koebe_check(R: RationalFunction, z0, r, R_outer, pairs=400, seed=0):
    """Fit C1, C2 with C1 f#(z) d(z,w) <= d(fz, fw) <= C2 f#(z) d(z,w) on B(z0, r)."""
    if not 0 < r < R_outer:
        raise DomainError("need 0 < r < R_outer")
    rng = np.random.default_rng(seed)
    a0, b0 = as_hom(z0)

    def ball(radius, count):
        # sample in the tangent disk and map by the spherical exponential at z0
        X0 = sphere_to_r3(np.atleast_1d(a0), np.atleast_1d(b0))[0]
        e1 = np.cross(X0, [0.0, 0.0, 1.0] if abs(X0[2]) < 0.9 else [1.0, 0.0, 0.0])
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(X0, e1)
        rad = radius * np.sqrt(rng.random(count))
        ang = 2 * np.pi * rng.random(count)
        X = np.cos(rad)[:, None] * X0 + np.sin(rad)[:, None] * (np.cos(ang)[:, None] * e1 + np.sin(ang)[:, None] * e2)
        return r3_to_sphere(X)

    # injectivity on the outer ball
    oa, ob = ball(R_outer, 600)
    fa, fb = R.eval_h(oa, ob)
    dz = sph_dist_h(oa[:, None], ob[:, None], oa[None, :], ob[None, :])
    dw = sph_dist_h(fa[:, None], fb[:, None], fa[None, :], fb[None, :])
    off = ~np.eye(len(oa), dtype=bool)
    if np.any((dw[off] < 1e-9 * dz[off]) & (dz[off] > 1e-6)):
        raise DomainError("map is not injective on the outer ball")
    za, zb = ball(r, pairs)
    wa, wb = ball(r, pairs)
    d = sph_dist_h(za, zb, wa, wb)
    keep = d > 0
    za, zb, wa, wb, d = za[keep], zb[keep], wa[keep], wb[keep], d[keep]
    fza, fzb = R.eval_h(za, zb)
    fwa, fwb = R.eval_h(wa, wb)
    ratio = sph_dist_h(fza, fzb, fwa, fwb) / (R.sharp_h(za, zb) * d)
    sharp = R.sharp_h(*ball(r, pairs))
    return {"C1": float(ratio.min()), "C2": float(ratio.max()),
            "sharp_ratio": float(sharp.max() / sharp.min())}


# ---------------------------------------------------------------- continuity across prism faces


def boundary_continuity_check(domain: ExtensionDomain, node_index: int, n: int, samples=48, mu_scale=1.0):
    """Largest R^3 gap between the critical-branch image and its neighbours on the prism faces.

    Lateral face: against the regular formula.  Bottom and top faces: against
    the sphere rules F(z, r_n(z)) = (f_n z, r_{n-1}(f_n z)) and the same for n + 1.
    """
    fam = domain.family
    node = fam.atlas.nodes[node_index]
    rho = fam.level_radius(node, n)
    k = int(math.sqrt(samples)) or 1
    th = 2 * np.pi * (np.arange(samples) + 0.5) / samples
    ts = np.linspace(0, 1, k)
    T, TH = np.meshgrid(ts, th)
    x = rho * (1 - 1e-12) * np.exp(1j * TH.ravel())
    t = T.ravel()
    za, zb = node.coord.from_local(node.inverse(x))
    ca, cb, cr = domain.critical_branch(node_index, n, za, zb, t, mu_scale)
    ra, rb, rr = domain.regular_branch(np.full(t.shape, n), np.full(t.shape, n + 1), za, zb, t)
    lateral = np.linalg.norm(sphere_to_r3(ca, cb) * cr[:, None] - sphere_to_r3(ra, rb) * rr[:, None], axis=1)

    rng = np.random.default_rng(n)
    inner = rho * np.sqrt(rng.random(samples)) * np.exp(2j * np.pi * rng.random(samples))
    ia, ib = node.coord.from_local(node.inverse(inner))
    faces = []
    for level, tval in ((n, 0.0), (n + 1, 1.0)):
        ca, cb, cr = domain.critical_branch(node_index, n, ia, ib, np.full(inner.shape, tval), mu_scale)
        sa, sb, _, _ = fam.step(level, ia, ib)
        sr = domain.radius(level - 1, sa, sb)
        faces.append(np.linalg.norm(sphere_to_r3(ca, cb) * cr[:, None] - sphere_to_r3(sa, sb) * sr[:, None], axis=1))
    return {"node": node_index, "n": n, "lateral": float(lateral.max()), "bottom": float(faces[0].max()),
            "top": float(faces[1].max()), "max": float(max(lateral.max(), faces[0].max(), faces[1].max()))}
