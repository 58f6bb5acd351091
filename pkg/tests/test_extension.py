import numpy as np
import pytest

from qrx.errors import DomainError
from qrx.extension import AxisProximityError, extend, format_orbit, iterate_extension, reflect
from qrx.sphere import ExtensionPoint, SpherePoint, r3_to_sphere, sph_dist_h


@pytest.fixture(scope="module")
def dom(pipe_a):
    return pipe_a.domain


def _points(dom, count, seed):
    a, b = r3_to_sphere(np.random.default_rng(seed).normal(size=(count, 3)))
    keep = np.ones(a.shape, bool)
    for node in dom.family.critical_nodes:
        keep &= sph_dist_h(a, b, node.point.a, node.point.b) > 1e-3
    return a[keep], b[keep]


@pytest.mark.parametrize("n", [0, 1, 2])
def test_spheres_map_to_spheres(dom, n):
    a, b = _points(dom, 200, n)
    level = dom.N0 + 1 + n
    r = dom.radius(level, a, b)
    keep = dom.in_domain(a, b, r)
    assert keep.sum() > 50
    a, b, r = a[keep], b[keep], r[keep]
    na, nb, nr, branch, _ = dom.extend_arrays(a, b, r)
    fa, fb = dom.R.eval_h(a, b)
    regular = branch != "critical"
    assert np.abs(na * fb - nb * fa)[regular].max() < 1e-12
    assert np.abs(nr - dom.radius(level - 1, na, nb)).max() < 1e-7


def test_unit_sphere_is_f(dom):
    a, b = _points(dom, 50, 5)
    na, nb, nr, branch, _ = dom.extend_arrays(a, b, np.ones(a.shape))
    fa, fb = dom.R.eval_h(a, b)
    assert np.all(nr == 1) and set(branch) == {"sphere"}
    assert np.abs(na * fb - nb * fa).max() < 1e-14


def test_outer_half_is_the_reflection(dom):
    z = SpherePoint.of(0.3 + 0.2j)
    r = float(dom.radius(dom.N0 + 2, np.array([z.a]), np.array([z.b]))[0]) + 1e-3
    inner = extend(dom, ExtensionPoint(z, r))
    outer = extend(dom, ExtensionPoint(z, 1 / r))
    assert outer.r == pytest.approx(1 / inner.r, rel=1e-14)
    assert outer.z == inner.z
    assert reflect(reflect(inner)).r == pytest.approx(inner.r)


def test_points_below_N0_are_rejected(dom):
    with pytest.raises(DomainError):
        extend(dom, ExtensionPoint(SpherePoint.of(0.3 + 0.2j), 0.01))


def test_critical_axis_is_rejected(dom):
    node = dom.family.critical_nodes[0]
    r = float(dom.radius(dom.N0 + 2, np.atleast_1d(node.point.a), np.atleast_1d(node.point.b))[0]) + 1e-4
    with pytest.raises(AxisProximityError):
        extend(dom, ExtensionPoint(node.point, r))


def test_orbit_dump(dom):
    z = SpherePoint.of(0.3 + 0.2j)
    r_inner = float(dom.radius(dom.N0, np.array([z.a]), np.array([z.b]))[0])
    res = iterate_extension(dom, ExtensionPoint(z, 1 - (1 - r_inner) / 4), 4)
    lines = format_orbit(res, dom).splitlines()
    assert lines[0].split()[0] == "0" and lines[0].split()[-2] == "start"
    body = [l for l in lines if not l.startswith("#")]
    assert len(body) == len(res.records)
    for rec in res.records[1:]:
        assert 0 < rec.point.r <= 1
    if res.escaped:
        assert lines[-1].startswith("# escaped")
