import pytest

from qrx.charts import ChartAtlas
from qrx.errors import ConfigError
from qrx.mapmodel import classify_postcritical, find_critical_points
from qrx.maps import bundled, load_map


def test_critical_points_of_map_a():
    crit = find_critical_points(bundled("one_minus_two_over_zsq"))
    labels = sorted(str(c.point) for c in crit)
    assert labels == ["SpherePoint(0)", "SpherePoint(∞)"]
    assert all(c.degree == 2 for c in crit)


def test_lattes_has_six_simple_critical_points():
    # 2d - 2 = 6 for degree 4
    assert len(find_critical_points(bundled("lattes"))) == 6


def test_map_a_summary():
    sch = classify_postcritical(bundled("one_minus_two_over_zsq"))
    assert sch.summary() == "expanding: true; postcritical: 0→∞→1→−1 (fixed, |λ|=4)"


def test_two_cycle_has_period_two():
    sch = classify_postcritical(bundled("one_minus_half_over_zsq"))
    assert [c.period for c in sch.cycles] == [2]
    assert sch.expanding


def test_periodic_critical_point_is_not_expanding():
    sch = classify_postcritical(bundled("square"))
    assert not sch.expanding
    with pytest.raises(ConfigError):
        ChartAtlas(bundled("square"))


def test_unknown_map_is_a_config_error():
    with pytest.raises(ConfigError):
        load_map("no_such_map")


def test_map_file(tmp_path):
    path = tmp_path / "m.json"
    path.write_text('{"num": [[-2, 0], 0, 1], "den": [0, 0, [1, 0]]}')
    assert load_map(str(path)).map_hash() == bundled("one_minus_two_over_zsq").map_hash()


def test_summary_of_a_map_without_critical_points():
    from qrx.mapmodel import classify_postcritical
    assert classify_postcritical(bundled("doubling")).summary() == "expanding: true; postcritical: none"
