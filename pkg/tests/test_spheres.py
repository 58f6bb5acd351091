import numpy as np
import pytest

from qrx.errors import DomainError, WindowError
from qrx.spheres import (TIE_TOL, calibrate_s, compute_N0_from_arrays, consecutive_index, icosphere, mesh_sphere,
                         write_obj)


@pytest.mark.parametrize("level", [0, 1, 2, 3, 4])
def test_icosphere_counts_and_topology(level):
    V, F = icosphere(level)
    assert len(V) == 10 * 4 ** level + 2
    assert len(F) == 20 * 4 ** level
    assert np.allclose(np.linalg.norm(V, axis=1), 1)
    edges = {tuple(sorted(e)) for f in F for e in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0]))}
    assert len(V) - len(edges) + len(F) == 2


def test_icosphere_level_must_be_non_negative():
    with pytest.raises(DomainError):
        icosphere(-1)


def test_calibration_rules():
    assert calibrate_s({1: 2.0, 2: 3.0}) == 1.0
    assert calibrate_s({1: 0.5, 2: 0.2, 3: 1.5}) == pytest.approx(0.18)


def test_radii_lie_in_the_unit_interval(pipe_a):
    fld = pipe_a.field
    for n in range(1, fld.n_max + 1):
        r = fld.grid_radius(n)
        assert np.all((r > 0) & (r < 1))


def test_radii_accumulate_at_the_unit_sphere(pipe_a):
    fld = pipe_a.field
    assert 1 - fld.grid_radius(12).min() < 1 - fld.grid_radius(9).min()


def test_consecutive_index_is_the_next_radius_up(pipe_a):
    fld = pipe_a.field
    a, b = fld.grid[0][:50], fld.grid[1][:50]
    radii = fld.radii_window(10, a, b)
    m = consecutive_index(fld, 10, (a, b), radii)
    for i in range(50):
        above = sorted((radii[j][i], j) for j in radii if radii[j][i] > radii[10][i] + TIE_TOL)
        assert m[i] == above[0][1]


def test_consecutive_index_ties_go_to_the_smaller_index():
    class Flat:
        window = 2

    radii = {3: np.array([0.5]), 4: np.array([0.7]), 5: np.array([0.7])}
    assert consecutive_index(Flat(), 3, (np.array([0j]), np.array([1 + 0j])), radii)[0] == 4


def test_missing_consecutive_index_raises():
    class Flat:
        window = 1

    radii = {2: np.array([0.9]), 3: np.array([0.95]), 4: np.array([0.5])}
    with pytest.raises(WindowError):
        consecutive_index(Flat(), 3, (np.array([0j]), np.array([1 + 0j])), radii)


def test_N0_rules():
    radii = {1: np.array([0.5, 0.7]), 2: np.array([0.6, 0.65]), 3: np.array([0.8, 0.75])}
    assert compute_N0_from_arrays(radii) == 3
    assert compute_N0_from_arrays(radii, mode="global") == 3
    with pytest.raises(WindowError):
        compute_N0_from_arrays({1: np.array([0.5, 0.7]), 2: np.array([0.6, 0.65])})


def test_obj_export(tmp_path, pipe_a):
    meshes = [mesh_sphere(pipe_a.field, n, 2) for n in (3, 4)]
    path = tmp_path / "s.obj"
    write_obj(meshes, path)
    lines = path.read_text().splitlines()
    assert [l for l in lines if l.startswith("o ")] == ["o S_3", "o S_4"]
    assert sum(l.startswith("v ") for l in lines) == 2 * 162
    faces = [list(map(int, l.split()[1:])) for l in lines if l.startswith("f ")]
    assert min(min(f) for f in faces) == 1 and max(max(f) for f in faces) == 2 * 162
    assert meshes[0].euler_characteristic == 2
    for m in meshes:
        assert np.allclose(np.linalg.norm(m.vertices, axis=1), m.radii)


def _preimages(R, z):
    deg = max(len(R.num), len(R.den))
    num = np.pad(np.asarray(R.num, complex), (0, deg - len(R.num)))
    den = np.pad(np.asarray(R.den, complex), (0, deg - len(R.den)))
    return np.concatenate([np.roots((num - w * den)[::-1]) for w in z])


@pytest.mark.parametrize("m", [1, 2, 3])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_radii_increase_on_preimages_of_the_two_cycle_neighbourhood(m, n):
    # numerical check only: r_{2m+n+2} >= r_{2m+n+1} on f^-n(U_c^{2m+1})
    from qrx.maps import bundled
    from qrx.pipeline import Pipeline
    pipe = Pipeline(bundled("one_minus_half_over_zsq"), n_max=16)
    fam, fld = pipe.family, pipe.field
    node = fam.critical_nodes[0]
    rng = np.random.default_rng(10 * m + n)
    rho = fam.level_radius(node, 2 * m + 1)
    x = rho * np.sqrt(rng.random(20)) * np.exp(2j * np.pi * rng.random(20))
    a, b = node.coord.from_local(node.inverse(x))
    z = a / b
    for _ in range(n):
        z = _preimages(pipe.R, z)
    one = np.ones_like(z)
    assert np.all(fld.radius(2 * m + n + 2, z, one) >= fld.radius(2 * m + n + 1, z, one))
