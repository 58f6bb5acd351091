"""The ten acceptance criteria, each at its stated tolerance.

Every test prints one line "criterion k: PASS|FAIL ..." so that the outcome
is visible in the log even when pytest captures output.
"""
import time

import pytest

from qrx.maps import bundled
from qrx.pipeline import Pipeline
from qrx.suites import (consecutive_suite, continuity_suite, coordinates_suite, derivative_suite, growth_suite,
                        radii_suite, scaling_suite, spheres_suite, uniformity_suite, winding_suite)

MAPS = ["one_minus_two_over_zsq", "lattes"]


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}")
    return emit


def test_criterion_1_winding(report):
    pipe = Pipeline(bundled("one_minus_two_over_zsq"))
    start = time.perf_counter()
    res = winding_suite(pipe)
    elapsed = time.perf_counter() - start
    agg = res["aggregate"]
    ok = res["pass"] and elapsed < 5
    report(1, ok, f"max rel error {agg['max_rel_error']:.2e} (tol 1e-4), "
                  f"sector violations {agg['violations']}, {elapsed:.2f}s (limit 5s)")
    assert agg["max_rel_error"] < 1e-4
    assert agg["violations"] == 0
    assert elapsed < 5


@pytest.mark.parametrize("name", MAPS)
def test_criterion_2_coordinates(name, report):
    start = time.perf_counter()
    pipe = Pipeline(bundled(name))  # fresh, so that chart construction is timed too
    res = coordinates_suite(pipe)
    elapsed = time.perf_counter() - start
    worst = res["aggregate"]["max_residual"]
    ok = res["pass"] and elapsed < 30
    report(2, ok, f"[{name}] Koenigs {worst['koenig']:.1e}, critical {worst['critical']:.1e} "
                  f"(tol 1e-8), {elapsed:.1f}s (limit 30s)")
    assert worst["koenig"] < 1e-8
    assert worst["critical"] < 1e-8
    assert elapsed < 30


@pytest.mark.parametrize("name", MAPS)
def test_criterion_3_derivative(name, pipes, report):
    res = derivative_suite(pipes[name])
    agg = res["aggregate"]
    report(3, res["pass"], f"[{name}] max rel error {agg['max_rel_error']:.1e} (tol 1e-3) over "
                           f"{agg['samples']} points, {agg['samples_with_winding']} through winding steps")
    assert agg["samples"] >= 600
    assert agg["max_rel_error"] < 1e-3


@pytest.mark.parametrize("name", MAPS)
def test_criterion_4_growth(name, pipes, report):
    res = growth_suite(pipes[name])
    agg = res["aggregate"]
    report(4, res["pass"], f"[{name}] first n with min norm > 10 s: {agg['first_n_above']}; "
                           f"not increasing at n = {agg['non_increasing_at']}")
    assert agg["first_n_above"] is not None and agg["first_n_above"] <= 10
    assert agg["non_increasing_at"] == []


@pytest.mark.parametrize("name", MAPS)
def test_criterion_5_radii(name, pipes, report):
    res = radii_suite(pipes[name])
    agg = res["aggregate"]
    a_min = min(m["a"] for m in agg["monotonicity"])
    report(5, res["pass"], f"[{name}] radii in (0,1): {agg['in_unit_interval']}; 1 - min r_N = "
                           f"{agg['accumulation']:.4f} at N = {agg['N']} (tol 0.05); monotone: {agg['monotone']}, "
                           f"smallest a = {a_min:.3f}")
    assert agg["in_unit_interval"]
    assert agg["monotone"] and a_min > 0
    assert agg["accumulation"] < 0.05


@pytest.mark.parametrize("name", MAPS)
def test_criterion_6_distance_scaling(name, pipes, report):
    res = scaling_suite(pipes[name])
    agg = res["aggregate"]
    report(6, res["pass"], f"[{name}] max rel error {agg['max_rel_error']:.1e} (tol 1e-9) on {agg['samples']} points")
    assert agg["samples"] == 1000
    assert agg["max_rel_error"] < 1e-9


@pytest.mark.parametrize("name", MAPS)
def test_criterion_7_consecutive_index(name, pipes, report):
    res = consecutive_suite(pipes[name])
    agg = res["aggregate"]
    report(7, res["pass"], f"[{name}] {agg['violations']} violations on {agg['samples']} samples")
    assert agg["samples"] >= 1000
    assert agg["violations"] == 0


@pytest.mark.parametrize("name", MAPS)
def test_criterion_8_boundary_continuity(name, pipes, report):
    res = continuity_suite(pipes[name])
    agg = res["aggregate"]
    report(8, res["pass"], f"[{name}] max residual {agg['max_residual']:.1e} (tol 1e-6) for n = 2..6; "
                           f"1% height fault missed at n = {agg['fault_undetected_at']} "
                           f"(smallest fault residual {agg['smallest_fault_residual']:.1e})")
    assert agg["max_residual"] < 1e-6
    assert agg["fault_undetected_at"] == []


def test_criterion_9_uniformity(pipe_a, report):
    start = time.perf_counter()
    res = uniformity_suite(pipe_a)
    elapsed = time.perf_counter() - start
    agg = res["aggregate"]
    ok = res["pass"] and elapsed < 300
    report(9, ok, f"slope {agg['slope']:.4f} (tol 0.05), max K {agg['max_K']:.4f}, kept {agg['kept']} of 200, "
                  f"control slope {agg['control_slope']:.3f} (> 0.3), {elapsed:.0f}s (limit 300s)")
    assert agg["slope"] < 0.05
    assert agg["max_K"] < float("inf")
    assert agg["control_slope"] > 0.3
    assert elapsed < 300


@pytest.mark.parametrize("name", MAPS)
def test_criterion_10_sphere_and_prism_preservation(name, pipes, report):
    res = spheres_suite(pipes[name])
    agg = res["aggregate"]
    report(10, res["pass"], f"[{name}] radial error {agg['max_radial_error']:.1e} (tol 1e-7); prism membership "
                            f"{agg['prism_members']}/{agg['prism_samples']}")
    assert agg["max_radial_error"] < 1e-7
    assert agg["prism_samples"] >= 1000
    assert agg["prism_members"] == agg["prism_samples"]
