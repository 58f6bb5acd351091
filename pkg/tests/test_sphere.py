import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qrx.errors import ConfigError, DomainError
from qrx.sphere import (ExtensionPoint, RationalFunction, SpherePoint, as_hom, chordal_dist, format_point,
                        jacobian_norms, local_map, r3_to_sphere, radial_product_metric, sph_derivative, sph_dist,
                        sphere_to_r3)

finite = st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False)


def test_distance_between_poles_is_pi():
    assert sph_dist(0, np.inf) == pytest.approx(math.pi)
    assert sph_dist(1, -1) == pytest.approx(math.pi)
    assert sph_dist(0, 1) == pytest.approx(math.pi / 2)


@given(finite, finite)
def test_distance_matches_chord_formula(z, w):
    # geodesic and chord on the unit sphere: chord = 2 sin(angle / 2)
    assert chordal_dist(z, w) == pytest.approx(2 * math.sin(sph_dist(z, w) / 2), abs=1e-12)


@given(finite, finite, st.floats(0, 2 * math.pi))
def test_rotation_about_the_axis_is_an_isometry(z, w, angle):
    rot = complex(math.cos(angle), math.sin(angle))
    assert sph_dist(rot * z, rot * w) == pytest.approx(sph_dist(z, w), abs=1e-12)


@given(finite)
def test_inversion_is_an_isometry(z):
    if abs(z) < 1e-6:
        return
    assert sph_dist(1 / z, 0) == pytest.approx(sph_dist(z, np.inf), abs=1e-12)


@given(finite)
def test_r3_embedding_round_trip(z):
    X = sphere_to_r3(*as_hom(z))
    assert np.linalg.norm(X) == pytest.approx(1.0)
    a, b = r3_to_sphere(X[None, :])
    assert sph_dist((a[0], b[0]), z) < 1e-12


def test_sharp_of_square_map_against_closed_form():
    f = RationalFunction([0, 0, 1], [1])
    z = np.array([0.3 + 0.1j, -2 + 1j, 5j])
    expected = 2 * np.abs(z) * (1 + np.abs(z) ** 2) / (1 + np.abs(z) ** 4)
    assert np.allclose(sph_derivative(f, z), expected)


def test_sharp_of_rotation_is_one():
    rot = RationalFunction.mobius(0, 1, -1, 0)  # z -> -1/z, a rotation of the sphere
    assert np.allclose(sph_derivative(rot, np.array([0.1, 2 + 3j, -7j])), 1.0)


def test_composition_matches_pointwise_composition():
    f = RationalFunction([-2, 0, 1], [0, 0, 1])
    g = RationalFunction([1, 1], [0, 2])
    h = f.compose(g)
    for z in (0.3 + 0.4j, -1.7j, 5.0):
        assert h(z) == pytest.approx(f(g(z)))


def test_common_root_is_rejected():
    with pytest.raises(ConfigError):
        RationalFunction([-1, 0, 1], [1, 1])  # (z - 1)(z + 1) / (z + 1)


def test_constant_map_is_rejected():
    with pytest.raises(ConfigError):
        RationalFunction([3], [1])


def test_local_map_at_infinity_fixes_zero():
    f = RationalFunction([1, 0, 2, 0, 1], [0, -4, 0, 4])  # infinity is fixed
    L = local_map(f, SpherePoint(1, 0), SpherePoint(1, 0))
    assert abs(L(0)) < 1e-14


def test_format_point_labels():
    assert format_point(np.inf) == "∞"
    assert format_point(-1) == "−1"
    assert format_point(1j) == "i"


def test_jacobian_norms_of_linear_map():
    mx, mn = jacobian_norms(lambda x: np.array([3 * x[0], x[1], 0.5 * x[2]]), np.zeros(3))
    assert (mx, mn) == (pytest.approx(3), pytest.approx(0.5))


def test_extension_point_requires_positive_radius():
    with pytest.raises(DomainError):
        ExtensionPoint(0.5, 0.0)


def test_radial_metric_is_comparable_to_euclidean():
    rng = np.random.default_rng(0)
    for _ in range(50):
        z, w = rng.normal(size=2) + 1j * rng.normal(size=2)
        if sph_dist(z, w) > 2.5:
            continue
        p, q = ExtensionPoint(z, rng.uniform(0.5, 1.5)), ExtensionPoint(w, rng.uniform(0.5, 1.5))
        euclid = np.linalg.norm(p.to_r3() - q.to_r3())
        assert 0.2 < radial_product_metric(p, q) / euclid < 5
