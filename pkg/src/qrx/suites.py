"""Verification suites shared by the command line and the test-suite.

Each suite takes a Pipeline and returns a dict with the keys ``suite``,
``check`` (what is being tested, used in failure messages), ``per_sample``,
``aggregate`` and ``pass``.  Nothing time-dependent goes into the result,
so identical inputs give identical reports.
"""
from __future__ import annotations

import math

import numpy as np

from .distortion import (boundary_continuity_check, extension_in_domain, extension_step, sample_shell,
                         stretch_control, uniform_K_report)
from .modified import frame_coordinate, regular_mask
from .pipeline import SUITES, Pipeline
from .sphere import jacobian_norms, normalize, r3_to_sphere
from .spheres import consecutive_index, critical_monotonicity_report
from .winding import Sector, domain_radius, sector_bounds_check, winding_norms, winding_scaled


def _result(name, check, per_sample, aggregate, ok):
    return {"suite": name, "check": check, "per_sample": per_sample, "aggregate": aggregate, "pass": bool(ok)}


def _random_sphere(rng, count):
    return r3_to_sphere(rng.normal(size=(count, 3)))


# ---------------------------------------------------------------- winding maps


def winding_suite(pipe: Pipeline, points=1000, pairs=10000):
    rng = np.random.default_rng(pipe.seed)
    tol = pipe.tol["winding"]
    per_sample = []
    worst = 0.0
    violations = 0
    for d in (2, 3, 4):
        lam, level = 4.0, 1
        rho = domain_radius(d, lam, level)
        # interior points, kept off the centre and off the rim where the map is not smooth
        z = rho * rng.uniform(0.05, 0.95, points) * np.exp(2j * np.pi * rng.random(points))
        mx, mn = winding_norms(d, lam, level, z)
        rel = np.empty(points)
        for i, zi in enumerate(z):
            fd_max, fd_min = jacobian_norms(lambda u: winding_scaled(d, lam, level, u), complex(zi), h=1e-6 * rho)
            rel[i] = max(abs(fd_max - mx[i]) / mx[i], abs(fd_min - mn[i]) / mn[i])
        sector = Sector(float(2 * np.pi * rng.random()), np.pi / d)
        rep = sector_bounds_check(d, sector, sector.sample(rng, pairs), sector.sample(rng, pairs))
        worst = max(worst, float(rel.max()))
        violations += rep["violations"]
        per_sample.append({"d": d, "max_rel_error": float(rel.max()), "sector_pairs": rep["pairs"],
                           "sector_violations": rep["violations"],
                           "ratio_range": [rep["min_ratio"], rep["max_ratio"]]})
    ok = worst < tol and violations == 0
    return _result("winding", "winding-map norms and sector bi-Lipschitz bounds", per_sample,
                   {"max_rel_error": worst, "violations": violations, "tolerance": tol}, ok)


# ---------------------------------------------------------------- charts


def coordinates_suite(pipe: Pipeline, samples=1000):
    rng = np.random.default_rng(pipe.seed)
    atlas = pipe.atlas
    R = pipe.R
    tol = pipe.tol["residual"]
    per_sample = []
    worst = {"koenig": 0.0, "critical": 0.0, "pullback": 0.0}
    for node in atlas.nodes:
        w = 0.999 * np.sqrt(rng.random(samples)) * np.exp(2j * np.pi * rng.random(samples))
        zeta = node.inverse(w)
        chi, _, ok = node.evaluate(zeta)
        a, b = node.coord.from_local(zeta)
        fa, fb = R.eval_h(a, b)
        image = atlas.nodes[node.image_index]
        chi_img, _, ok_img = image.evaluate(image.coord.to_local(fa, fb))
        if node.kind == "koenig":
            expected = node.sigma * chi
        elif node.kind == "critical":
            expected = chi ** node.degree
        else:
            expected = chi
        res = np.abs(chi_img - expected)
        res = np.where(ok & ok_img, res, np.inf)
        value = float(res.max())
        worst[node.kind] = max(worst[node.kind], value)
        per_sample.append({"node": node.index, "kind": node.kind, "point": node.describe()["point"],
                           "max_residual": value, "round_trip": float(np.abs(chi - w).max())})
    ok = all(v < tol for v in worst.values())
    return _result("coordinates", "chart conjugacy residuals", per_sample,
                   {"max_residual": worst, "tolerance": tol, "chart_r0": atlas.r0}, ok)


# ---------------------------------------------------------------- composition derivative


def _sample_near_critical(pipe, rng, n, count):
    fam = pipe.family
    nodes = fam.critical_nodes
    a_all, b_all = [], []
    for i in range(count):
        node = nodes[i % len(nodes)]
        x = fam.level_radius(node, n) * 1.5 * np.sqrt(rng.random()) * np.exp(2j * np.pi * rng.random())
        zeta = node.taylor_inverse(np.array([x])) if abs(x) > 1 else node.inverse(np.array([x]))
        a, b = node.coord.from_local(zeta)
        a_all.append(a[0])
        b_all.append(b[0])
    return np.array(a_all), np.array(b_all)


def _fd_norm(fam, n, a, b):
    """Largest singular value of a central-difference Jacobian, converted to the spherical metric."""
    u_in, inv_in = frame_coordinate(a, b)
    a1, b1, _, _, _ = fam.compose(n, np.array([a]), np.array([b]), with_jacobian=False)
    u_out, inv_out = frame_coordinate(a1, b1)

    def g(u):
        pt = (np.array([u]), np.array([1 + 0j])) if not inv_in else (np.array([1 + 0j]), np.array([u]))
        A, B, _, _, _ = fam.compose(n, *pt, with_jacobian=False)
        return (A / B)[0] if not inv_out[0] else (B / A)[0]

    mx, _ = jacobian_norms(g, complex(u_in), h=1e-7 * (1 + abs(u_in)))
    return mx * (1 + abs(u_in) ** 2) / (1 + abs(u_out[0]) ** 2)


def derivative_suite(pipe: Pipeline, points=100, n_values=range(1, 7)):
    rng = np.random.default_rng(pipe.seed)
    fam = pipe.family
    tol = pipe.tol["derivative"]
    per_sample = []
    worst = 0.0
    windings = 0
    for n in n_values:
        half = points // 2
        na, nb = _sample_near_critical(pipe, rng, n, 2 * half)
        ra, rb = _random_sphere(rng, 2 * (points - half))
        a = np.concatenate([na, ra])
        b = np.concatenate([nb, rb])
        a, b = normalize(a, b)
        keep = regular_mask(fam, n, a, b)
        near_idx = np.nonzero(keep[:2 * half])[0][:half]
        far_idx = 2 * half + np.nonzero(keep[2 * half:])[0][:points - half]
        idx = np.concatenate([near_idx, far_idx])
        a, b = a[idx], b[idx]
        exact, _ = fam.compose_norms(n, a, b)
        _, _, _, owners, _ = fam.compose(n, a, b, with_jacobian=False)
        wound = np.any(np.array(owners) >= 0, axis=0)
        windings += int(wound.sum())
        for i in range(a.size):
            fd = _fd_norm(fam, n, a[i], b[i])
            rel = abs(fd - exact[i]) / exact[i]
            worst = max(worst, rel)
            per_sample.append({"n": n, "norm": float(exact[i]), "finite_difference": float(fd),
                               "rel_error": float(rel), "winding_step": bool(wound[i])})
    ok = worst < tol and len(per_sample) >= points * len(list(n_values))
    return _result("derivative", "composition norm against finite differences", per_sample,
                   {"max_rel_error": float(worst), "samples": len(per_sample),
                    "samples_with_winding": windings, "tolerance": tol}, ok)


# ---------------------------------------------------------------- growth and radii


def _first_exceeding(table, bound, limit=10):
    return next((n for n in sorted(table) if n <= limit and table[n] > bound), None)


def growth_suite(pipe: Pipeline):
    fld = pipe.field
    table = fld.growth_table
    factor = pipe.tol["growth_factor"]
    ns = sorted(table)
    dips = [n for n in ns if n >= 3 and n + 1 in table and not table[n + 1] > table[n]]
    first = _first_exceeding(table, factor * fld.s)
    per_sample = [{"n": n, "min_norm": table[n]} for n in ns]
    ok = not dips and first is not None
    return _result("growth", "minimum composition norm grows past 10 s", per_sample,
                   {"s": fld.s, "threshold": factor * fld.s, "first_n_above": first,
                    "non_increasing_at": dips, "growth_index": fld.growth_index}, ok)


def radii_suite(pipe: Pipeline, n_range=range(2, 9)):
    fld = pipe.field
    fam = pipe.family
    per_sample = []
    in_range = True
    for n in range(1, fld.n_max + 1):
        r = fld.grid_radius(n)
        good = bool(np.all((r > 0) & (r < 1)))
        in_range &= good
        per_sample.append({"n": n, "min_r": float(r.min()), "max_r": float(r.max()), "in_unit_interval": good})
    first = _first_exceeding(fld.growth_table, pipe.tol["growth_factor"] * fld.s)
    accumulation = float(1 - fld.grid_radius(first).min()) if first else math.inf
    monotone = []
    for node in pipe.atlas.nodes:
        rng_n = [n for n in n_range if n >= max(2, node.depth)]
        rep = critical_monotonicity_report(fld, node.index, rng_n, seed=pipe.seed,
                                           ratio_bound=pipe.tol["monotone_ratio"])
        monotone.append({"node": node.index, "kind": node.kind, "a": rep["a"], "b": rep["b"], "pass": rep["pass"]})
    mono_ok = all(m["pass"] for m in monotone)
    ok = in_range and accumulation < pipe.tol["accumulation"] and mono_ok
    return _result("radii", "radii in (0,1), accumulation at 1, monotone near critical orbits", per_sample,
                   {"in_unit_interval": in_range, "N": first, "accumulation": accumulation,
                    "accumulation_tolerance": pipe.tol["accumulation"], "monotonicity": monotone,
                    "monotone": mono_ok}, ok)


# ---------------------------------------------------------------- radius identities


def _regular_samples(pipe, rng, count, levels):
    """Random points where every f_j, j in ``levels``, agrees with f."""
    fam = pipe.family
    a, b = _random_sphere(rng, 3 * count)
    keep = np.ones(a.shape, bool)
    for j in levels:
        own, *_ = fam.critical_owner(j, a, b)
        keep &= own < 0
    return a[keep][:count], b[keep][:count]


def scaling_suite(pipe: Pipeline, samples=1000):
    rng = np.random.default_rng(pipe.seed)
    fld = pipe.field
    R = pipe.R
    ns = rng.integers(2, fld.n_max + 1, samples)
    worst = 0.0
    per_sample = []
    for n in np.unique(ns):
        count = int(np.sum(ns == n))
        a, b = _regular_samples(pipe, rng, count, [int(n)])
        fa, fb = R.eval_h(a, b)
        lhs = fld.distance(int(n) - 1, fa, fb)
        rhs = R.sharp_h(a, b) * fld.distance(int(n), a, b)
        rel = np.abs(lhs - rhs) / np.abs(lhs)
        worst = max(worst, float(rel.max()))
        per_sample.append({"n": int(n), "samples": int(a.size), "max_rel_error": float(rel.max())})
    tol = pipe.tol["scaling"]
    return _result("scaling", "distance-scaling identity under f", per_sample,
                   {"max_rel_error": worst, "samples": int(sum(p["samples"] for p in per_sample)),
                    "tolerance": tol}, worst < tol)


def consecutive_suite(pipe: Pipeline, samples=1000):
    rng = np.random.default_rng(pipe.seed)
    fld = pipe.field
    lo = max(pipe.N0, fld.window + 2)
    ns = rng.integers(lo, fld.n_max + 1, samples)
    violations = 0
    per_sample = []
    for n in np.unique(ns):
        n = int(n)
        count = int(np.sum(ns == n))
        a, b = _regular_samples(pipe, rng, count, range(n - fld.window, n + fld.window + 1))
        m = np.atleast_1d(consecutive_index(fld, n, (a, b)))
        fa, fb = pipe.R.eval_h(a, b)
        m_img = np.atleast_1d(consecutive_index(fld, n - 1, (fa, fb)))
        bad = int(np.sum(m_img != m - 1))
        violations += bad
        per_sample.append({"n": n, "samples": int(a.size), "violations": bad})
    total = int(sum(p["samples"] for p in per_sample))
    return _result("consecutive", "consecutive index shifts by one under f", per_sample,
                   {"violations": violations, "samples": total}, violations == 0 and total >= samples)


# ---------------------------------------------------------------- extension


def continuity_suite(pipe: Pipeline, n_values=range(2, 7), fault_scale=1.01):
    dom = pipe.domain
    tol = pipe.tol["continuity"]
    per_sample = []
    worst = 0.0
    undetected = []
    faint = math.inf
    for n in n_values:
        fault_n = 0.0
        for node in pipe.family.critical_nodes:
            rep = boundary_continuity_check(dom, node.index, n)
            bad = boundary_continuity_check(dom, node.index, n, mu_scale=fault_scale)
            worst = max(worst, rep["max"])
            fault_n = max(fault_n, bad["max"])
            per_sample.append({"node": node.index, "n": n, "lateral": rep["lateral"], "bottom": rep["bottom"],
                               "top": rep["top"], "fault_residual": bad["max"]})
        # the perturbed map is caught when the continuity check itself fails
        if not fault_n > tol:
            undetected.append(n)
        faint = min(faint, fault_n)
    ok = worst < tol and not undetected
    return _result("continuity", "continuity across prism faces, with fault injection", per_sample,
                   {"max_residual": worst, "tolerance": tol, "fault_scale": fault_scale,
                    "fault_undetected_at": undetected, "smallest_fault_residual": faint,
                    "fault_reference": pipe.tol["fault"],
                    "fault_above_reference": bool(faint > pipe.tol["fault"])}, ok)


def uniformity_suite(pipe: Pipeline, samples=200, n_max=8, depth=8):
    dom = pipe.domain
    pts = sample_shell(dom, samples, depth, seed=pipe.seed)
    rep = uniform_K_report(extension_step(dom), pts, n_max, in_domain=extension_in_domain(dom))
    ctl = uniform_K_report(stretch_control(), pts, n_max)
    agg = rep["aggregate"]
    slope_ok = agg["slope"] < pipe.tol["slope"]
    control_ok = ctl["aggregate"]["slope"] > pipe.tol["control_slope"]
    ok = slope_ok and rep["finite"] and control_ok
    aggregate = {"K_by_n": {str(k): v for k, v in agg["K_by_n"].items()}, "slope": agg["slope"],
                 "max_K": agg["max_K"], "kept": agg["kept"], "dropped": agg["dropped"],
                 "control_slope": ctl["aggregate"]["slope"], "slope_tolerance": pipe.tol["slope"],
                 "control_threshold": pipe.tol["control_slope"]}
    return _result("uniformity", "bounded distortion of the iterates of F", rep["per_sample"], aggregate, ok)


def spheres_suite(pipe: Pipeline, samples=1000, levels=4):
    rng = np.random.default_rng(pipe.seed)
    dom = pipe.domain
    fld = pipe.field
    N0 = dom.N0
    # sphere to sphere
    radial = 0.0
    per_sample = []
    for n in range(N0 + 1, N0 + levels + 1):
        a, b = _random_sphere(rng, samples // levels)
        r = fld.radius(n, a, b)
        keep = dom.in_domain(a, b, r)
        a, b, r = a[keep], b[keep], r[keep]
        na, nb, nr, branch, _ = dom.extend_arrays(a, b, r)
        err = np.abs(nr - fld.radius(n - 1, na, nb))
        radial = max(radial, float(err.max()))
        per_sample.append({"kind": "sphere", "n": n, "samples": int(a.size), "max_radial_error": float(err.max()),
                           "critical_samples": int(np.sum(branch == "critical"))})
    # prism membership: the image of the gap (n, m) at z is the gap (n-1, m-1) at f(z)
    a, b = _random_sphere(rng, 2 * samples)
    ns = rng.integers(N0 + 1, N0 + levels + 1, a.size)
    t = rng.uniform(0.05, 0.95, a.size)
    r = np.empty(a.size)
    for n in np.unique(ns):
        sel = ns == n
        lo = fld.radius(int(n), a[sel], b[sel])
        m = np.atleast_1d(consecutive_index(fld, int(n), (a[sel], b[sel])))
        hi = np.array([fld.radius(int(mm), a[sel][i:i + 1], b[sel][i:i + 1])[0] for i, mm in enumerate(m)])
        r[sel] = lo + t[sel] * (hi - lo)
    keep = np.nonzero(dom.in_domain(a, b, r))[0][:samples]
    a, b, r = a[keep], b[keep], r[keep]
    src = dom.locate(a, b, r)
    na, nb, nr, branch, _ = dom.extend_arrays(a, b, r)
    img = dom.locate(na, nb, nr)
    inside = (img.n == src.n - 1) & (img.m == src.m - 1)
    members = int(inside.sum())
    per_sample.append({"kind": "prism", "samples": int(keep.size), "members": members,
                       "critical_samples": int(np.sum(branch == "critical"))})
    ok = radial < pipe.tol["radial"] and members == keep.size and keep.size >= samples
    return _result("spheres", "S_n maps to S_{n-1} and prisms map to prisms", per_sample,
                   {"max_radial_error": radial, "radial_tolerance": pipe.tol["radial"],
                    "prism_samples": int(keep.size), "prism_members": members}, ok)


RUNNERS = {
    "winding": winding_suite,
    "coordinates": coordinates_suite,
    "derivative": derivative_suite,
    "growth": growth_suite,
    "radii": radii_suite,
    "scaling": scaling_suite,
    "consecutive": consecutive_suite,
    "continuity": continuity_suite,
    "uniformity": uniformity_suite,
    "spheres": spheres_suite,
}
assert set(RUNNERS) == set(SUITES)


def run_suites(pipe: Pipeline, names):
    """Run the named suites and bundle them into one report."""
    results = [RUNNERS[name](pipe) for name in names]
    return {"map_hash": pipe.map_hash, "suite": list(names),
            "per_sample": [{"suite": r["suite"], **s} for r in results for s in r["per_sample"]],
            "aggregate": {r["suite"]: {"check": r["check"], "pass": r["pass"], **r["aggregate"]} for r in results},
            "pass": all(r["pass"] for r in results)}
