import numpy as np
import pytest

from qrx.charts import (ChartAtlas, koenig_forward, koenig_inverse, load_atlas, neighborhood_level, read_chart_cache,
                        save_atlas, write_chart_cache)
from qrx.errors import ConfigError
from qrx.maps import bundled
from qrx.sphere import SpherePoint


@pytest.fixture(scope="module")
def atlas():
    return ChartAtlas(bundled("one_minus_two_over_zsq"))


@pytest.fixture(scope="module")
def two_cycle():
    return ChartAtlas(bundled("one_minus_half_over_zsq"))


def _disk(rng, count, radius=0.95):
    return radius * np.sqrt(rng.random(count)) * np.exp(2j * np.pi * rng.random(count))


def test_inverse_then_chart_is_identity(atlas):
    rng = np.random.default_rng(0)
    for node in atlas.nodes:
        w = _disk(rng, 200)
        chi, _, ok = node.evaluate(node.inverse(w))
        assert ok.all()
        assert np.abs(chi - w).max() < 1e-12


def test_koenigs_chart_linearises_the_map(atlas):
    # psi(f(z)) = lambda psi(z) with lambda = f'(-1) = -4
    node = next(n for n in atlas.nodes if n.kind == "koenig")
    rng = np.random.default_rng(1)
    w = _disk(rng, 200, 0.2)
    z = node.coord.from_local(node.inverse(w))
    fz = atlas.R.eval_h(*z)
    chi_f, _, _ = node.evaluate(node.coord.to_local(*fz))
    assert node.sigma == pytest.approx(-4)
    assert np.abs(chi_f - node.sigma * w).max() < 1e-11


def test_series_agrees_with_the_backward_limit(atlas, two_cycle):
    for at in (atlas, two_cycle):
        for node in (n for n in at.nodes if n.kind == "koenig"):
            zeta = 0.7 * node.grid_radius * np.exp(2j * np.pi * np.arange(40) / 40)
            fast, dfast, _ = node.evaluate(zeta)
            saved = [m.series_radius for m in node.cycle_nodes]
            try:
                for m in node.cycle_nodes:
                    m.series_radius = 1e-9 * saved[0]
                slow, dslow, _ = node.evaluate(zeta)
            finally:
                for m, r in zip(node.cycle_nodes, saved):
                    m.series_radius = r
            assert np.abs(fast / slow - 1).max() < 1e-12
            assert np.abs(dfast / dslow - 1).max() < 1e-12


def test_two_cycle_charts_advance_by_sigma(two_cycle):
    nodes = [n for n in two_cycle.nodes if n.kind == "koenig"]
    sigma = nodes[0].sigma
    assert abs(sigma) ** 2 == pytest.approx(abs(two_cycle.schedule.cycles[0].multiplier))
    rng = np.random.default_rng(2)
    for node in nodes:
        nxt = two_cycle.nodes[node.image_index]
        w = _disk(rng, 100, 0.3)
        fz = two_cycle.R.eval_h(*node.coord.from_local(node.inverse(w)))
        chi_f, _, _ = nxt.evaluate(nxt.coord.to_local(*fz))
        assert np.abs(chi_f - sigma * w).max() < 1e-11


def test_critical_chart_is_a_root_of_the_pulled_back_chart(atlas):
    for node in atlas.critical_nodes:
        parent = atlas.nodes[node.image_index]
        w = _disk(np.random.default_rng(3), 100)
        fz = atlas.R.eval_h(*node.coord.from_local(node.inverse(w)))
        chi_f, _, _ = parent.evaluate(parent.coord.to_local(*fz))
        assert np.abs(chi_f - w ** node.degree).max() < 1e-11


def test_base_neighbourhoods_are_disjoint(atlas):
    from qrx.sphere import sph_dist_h
    for i, p in enumerate(atlas.nodes):
        for q in atlas.nodes[i + 1:]:
            assert sph_dist_h(p.point.a, p.point.b, q.point.a, q.point.b) > p.sph_radius + q.sph_radius


def test_wrapper_round_trip(atlas):
    node = next(n for n in atlas.nodes if n.kind == "koenig")
    z = koenig_inverse(node, 0.5 + 0.25j)
    assert isinstance(z, SpherePoint)
    assert koenig_forward(node, z) == pytest.approx(0.5 + 0.25j, abs=1e-12)


def test_level_of_a_critical_point_is_unbounded(atlas):
    owner, level = neighborhood_level(atlas, 0.0, n_max=20)
    assert atlas.nodes[owner].point == SpherePoint.of(0)
    assert level == 20


def test_cache_round_trip(tmp_path, atlas):
    grid = atlas.nodes[0].grid
    path = tmp_path / "c.qrx"
    write_chart_cache(path, "abc", 0, 0.125, -4, grid)
    header, back = read_chart_cache(path)
    assert header["map_hash"] == "abc" and header["grid"] == list(grid.shape)
    assert np.array_equal(back, grid)
    assert path.read_bytes()[:4] == b"QRX1"


def test_cache_rejects_foreign_files(tmp_path):
    path = tmp_path / "x.qrx"
    path.write_bytes(b"NOPE0000")
    with pytest.raises(ConfigError):
        read_chart_cache(path)


def test_atlas_reloads_from_cache(tmp_path, atlas):
    save_atlas(atlas, tmp_path, "h")
    again = load_atlas(atlas.R, tmp_path, "h")
    assert again.r0 == atlas.r0
    w = np.array([0.3 + 0.1j])
    for a, b in zip(atlas.nodes, again.nodes):
        assert a.inverse(w) == pytest.approx(b.inverse(w), abs=1e-15)
    with pytest.raises(ConfigError):
        load_atlas(atlas.R, tmp_path, "other-map")
