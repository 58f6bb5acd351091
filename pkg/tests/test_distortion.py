import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qrx.distortion import estimate_distortion, fibonacci_directions, koebe_check, log_slope, stretch_control
from qrx.errors import DomainError
from qrx.maps import bundled
from qrx.sphere import RationalFunction


def test_fibonacci_directions_are_unit_and_balanced():
    d = fibonacci_directions(200)
    assert np.allclose(np.linalg.norm(d, axis=1), 1)
    assert np.linalg.norm(d.mean(axis=0)) < 1e-2


@given(st.complex_numbers(max_magnitude=2), st.complex_numbers(min_magnitude=0.5, max_magnitude=2))
@settings(max_examples=30, deadline=None)
def test_mobius_maps_are_conformal(c, scale):
    K, _ = estimate_distortion(lambda z: (scale * z + c) / (0.1 * z + 1), 0.2 + 0.1j)
    assert K == pytest.approx(1, abs=1e-2)


@pytest.mark.parametrize("d", [2.0, 3.0, 5.0])
def test_affine_stretch_has_distortion_d(d):
    K, _ = estimate_distortion(lambda z: d * z.real + 1j * z.imag, 0.3 + 0.0j)
    assert K == pytest.approx(d, rel=1e-9)


def test_spatial_stretch_control():
    step = stretch_control(2.0)
    K, _ = estimate_distortion(step, np.array([0.1, 0.2, 0.3]), directions=256)
    assert K == pytest.approx(2, rel=2e-2)
    twice = lambda X: step(step(X))
    K2, _ = estimate_distortion(twice, np.array([0.1, 0.2, 0.3]), directions=256)
    assert K2 == pytest.approx(4, rel=2e-2)


def test_log_slope():
    ns = np.arange(1, 9)
    assert log_slope(ns, 3 * 2.0 ** ns) == pytest.approx(np.log(2))
    assert log_slope(ns, np.ones(8)) == pytest.approx(0, abs=1e-12)
    assert log_slope([1, 2], [1, np.inf]) == np.inf


def test_koebe_constants_of_a_rotation_are_one():
    R = RationalFunction([0, 1j], [1])
    out = koebe_check(R, 0.3 + 0.1j, 0.05, 0.1)
    assert out["C1"] == pytest.approx(1, abs=1e-9)
    assert out["C2"] == pytest.approx(1, abs=1e-9)


def test_koebe_constants_bracket_one_for_a_univalent_branch():
    out = koebe_check(bundled("one_minus_two_over_zsq"), 0.6 + 0.6j, 0.02, 0.1)
    assert out["C1"] <= 1 <= out["C2"]
    assert out["C2"] / out["C1"] < 1.5


def test_koebe_rejects_a_bad_ball():
    with pytest.raises(DomainError):
        koebe_check(bundled("one_minus_two_over_zsq"), 0.5, 0.2, 0.1)
