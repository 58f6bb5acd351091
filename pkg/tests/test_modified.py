import numpy as np
import pytest

from qrx.errors import ConfigError, DomainError
from qrx.maps import bundled
from qrx.modified import (ModifiedMapFamily, compose_eval, compose_norm, half_step_norm, modified_eval,
                          modified_norm, regular_mask, schedule_compose)
from qrx.sphere import SpherePoint, r3_to_sphere, sph_dist_h, sph_derivative


@pytest.fixture(scope="module")
def family():
    return ModifiedMapFamily(bundled("one_minus_two_over_zsq"))


def test_agrees_with_f_away_from_critical_points(family):
    a, b = r3_to_sphere(np.random.default_rng(0).normal(size=(300, 3)))
    for n in (1, 4, 7):
        own, *_ = family.critical_owner(n, a, b)
        na, nb, _, _ = family.step(n, a, b)
        fa, fb = family.R.eval_h(a, b)
        outside = own < 0
        assert outside.sum() > 100
        assert np.abs(na * fb - nb * fa)[outside].max() < 1e-15


def test_critical_point_maps_to_its_critical_value(family):
    for n in (1, 3, 6):
        assert modified_eval(family, n, 0.0) == SpherePoint(1, 0)
        assert modified_eval(family, n, np.inf) == SpherePoint.of(1)


def test_derivative_does_not_vanish_at_critical_points(family):
    assert sph_derivative(family.R, 0.0) == 0.0
    for n in (1, 2, 5):
        assert modified_norm(family, n, 0.0) > 0


def test_continuous_across_the_winding_circle(family):
    for node in family.critical_nodes:
        for n in (2, 4, 6):
            rho = family.level_radius(node, n)
            w = rho * np.exp(2j * np.pi * np.arange(64) / 64)
            for scale in (1 - 1e-9, 1 + 1e-9):
                a, b = node.coord.from_local(node.inverse(w * scale) if scale < 1 else node.taylor_inverse(w * scale))
                na, nb, _, _ = family.step(n, a, b)
                fa, fb = family.R.eval_h(a, b)
                assert sph_dist_h(na, nb, fa, fb).max() < 1e-6


def test_norm_is_multiplicative_for_holomorphic_steps(family):
    a, b = r3_to_sphere(np.random.default_rng(1).normal(size=(50, 3)))
    keep = regular_mask(family, 3, a, b)
    own, *_ = family.critical_owner(3, a, b)
    sel = keep & (own < 0)
    a, b = a[sel], b[sel]
    fa, fb, _, _ = family.step(3, a, b)
    lhs, _ = family.compose_norms(3, a, b)
    rhs, _ = family.compose_norms(2, fa, fb)
    assert lhs == pytest.approx(rhs * family.R.sharp_h(a, b), rel=1e-12)


def test_compose_eval_trace_records_winding_steps(family):
    point, trace = compose_eval(family, 5, 0.0)
    assert point == SpherePoint.of(-1)
    assert trace.winding_steps and trace.k == trace.winding_steps[0][0] - 1
    assert len(trace.points) == 5


def test_compose_norm_matches_scalar_wrapper(family):
    z = 0.4 + 0.3j
    a, b = np.array([z]), np.array([1 + 0j])
    assert compose_norm(family, 4, z) == pytest.approx(family.compose_norms(4, a, b)[0][0])


def test_n_is_checked(family):
    with pytest.raises(DomainError):
        modified_eval(family, 0, 0.5)


def test_schedule_compose_uses_whole_cycle_passes():
    fam = ModifiedMapFamily(bundled("one_minus_half_over_zsq"), n_max=20)
    (a, b), norms = schedule_compose(fam, 2, np.array([0.2 + 0.1j]))
    ref_a, ref_b, _, _, _ = fam.compose(4, np.array([0.2 + 0.1j]), np.array([1 + 0j]))
    assert abs(a[0] * ref_b[0] - b[0] * ref_a[0]) < 1e-14


def test_half_step_norm_interpolates_geometrically():
    assert half_step_norm(2.0, 8.0, 1, 2) == pytest.approx(4.0)
    assert half_step_norm(2.0, 8.0, 0, 3) == pytest.approx(2.0)
