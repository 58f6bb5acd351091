import json

import pytest
from hypothesis import given, settings, strategies as st

from qrx.cli import cli_run
from qrx.errors import ConfigError
from qrx.pipeline import DEFAULT_TOLERANCES, SUITES, JobConfig


@pytest.fixture(autouse=True)
def _no_env_cache(monkeypatch):
    monkeypatch.delenv("QRX_CACHE", raising=False)


def test_analyze(capsys):
    assert cli_run(["analyze"]) == 0
    assert capsys.readouterr().out == "expanding: true; postcritical: 0→∞→1→−1 (fixed, |λ|=4)\n"


def test_verify_writes_a_report(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert cli_run(["verify", "--map", "lattes", "--suite", "winding", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert set(report) == {"map_hash", "suite", "per_sample", "aggregate", "pass"}
    assert report["suite"] == ["winding"] and report["pass"] is True
    assert all(s["suite"] == "winding" for s in report["per_sample"])
    assert "PASS winding" in capsys.readouterr().out
    assert cli_run(["report", str(out)]) == 0


def test_reports_are_deterministic(tmp_path):
    paths = [tmp_path / f"r{i}.json" for i in range(2)]
    for p in paths:
        assert cli_run(["verify", "--map", "lattes", "--suite", "winding,scaling", "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_failing_suite_exits_one(tmp_path):
    out = tmp_path / "r.json"
    assert cli_run(["verify", "--suite", "winding", "--tol-winding", "1e-30", "--out", str(out)]) == 1
    assert cli_run(["report", str(out)]) == 1


def test_mesh(tmp_path, capsys):
    out = tmp_path / "s.obj"
    assert cli_run(["mesh", "--n", "3", "--level", "4", "--out", str(out)]) == 0
    text = out.read_text()
    assert text.count("\nv ") + text.startswith("v ") == 2562
    assert sum(l.startswith("f ") for l in text.splitlines()) == 5120


def test_orbit(tmp_path, capsys):
    assert cli_run(["orbit", "--z", "0.3 0.2", "--steps", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("0 0.29999999999999999 0.20000000000000001")


def test_build_uses_the_cache(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("QRX_CACHE", str(tmp_path / "env"))
    assert cli_run(["build", "--map", "lattes", "--cache", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env").is_dir() and not (tmp_path / "flag").exists()
    first = capsys.readouterr().out
    assert cli_run(["build", "--map", "lattes"]) == 0
    assert capsys.readouterr().out == first


@pytest.mark.parametrize("argv", [
    ["bogus"],
    ["verify", "--tol-winding", "-1"],
    ["verify", "--tol-nonsense", "1"],
    ["verify", "--suite", "nope"],
    ["build", "--map", "no_such_map"],
    ["build", "--map", "square"],
    ["build", "--map", "doubling"],
    ["mesh", "--n", "x"],
    ["orbit", "--z", "1 2 3"],
    ["report", "/nonexistent/report.json"],
])
def test_configuration_errors_exit_two(argv):
    assert cli_run(argv) == 2


def test_numeric_failure_exits_three():
    assert cli_run(["orbit", "--z", "inf", "--steps", "1"]) == 3


tolerances = st.dictionaries(st.sampled_from(sorted(DEFAULT_TOLERANCES)),
                             st.floats(min_value=1e-12, max_value=1e3), max_size=4)


@given(tolerances, st.integers(0, 8), st.integers(2, 30), st.lists(st.sampled_from(SUITES), max_size=4),
       st.integers(0, 2 ** 31))
@settings(max_examples=40, deadline=None)
def test_job_config_round_trip(tol, level, n_max, suites, seed):
    cfg = JobConfig(num=[[-2, 0], [0, 0], [1, 0]], den=[[0, 0], [0, 0], [1, 0]], grid_level=level, n_max=n_max,
                    tolerances={**DEFAULT_TOLERANCES, **tol}, suites=suites, seed=seed)
    assert JobConfig.from_json(cfg.to_json()) == cfg


@pytest.mark.parametrize("text", ["[]", "{", '{"num": [[1, 0]], "den": [[1, 0]], "colour": 1}',
                                  '{"num": [[1, 0]], "den": [[1, 0]], "grid_level": 9}'])
def test_bad_job_configs(text):
    with pytest.raises(ConfigError):
        JobConfig.from_json(text)
