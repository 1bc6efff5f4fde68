"""
Tests for the seba command-line surface and its exit codes.
"""

import json

import pytest

from app.cli.parser import dispatch


@pytest.fixture
def norms_file(tmp_path):
    path = str(tmp_path / "norms.csv")
    assert dispatch(["norms", "--coeffs", "1,1", "--cutoff", "200", "--out", path]) == 0
    return path


def test_norms_command(tmp_path):
    out = tmp_path / "norms.csv"
    assert dispatch(["norms", "--dim", "2", "--coeffs", "1,1", "--cutoff", "10", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 10
    assert lines[0].startswith("# seba-norms v1 dim=2")


def test_norms_reruns_are_byte_identical(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (first, second):
        assert dispatch(["norms", "--coeffs", "1/2,3", "--cutoff", "50", "--out", str(path)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_solve_reruns_are_byte_identical(tmp_path, norms_file):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (first, second):
        assert dispatch(["solve", "--norms", norms_file, "--phi", "1.0", "--out", str(path)]) == 0
    assert first.read_bytes() == second.read_bytes()
    assert first.read_text().startswith("# seba-perturbed v1 phi=1 ")


def test_solve_rejects_unsupported_schema(tmp_path, norms_file):
    path = tmp_path / "future.csv"
    with open(norms_file) as handle:
        path.write_text(handle.read().replace("seba-norms v1", "seba-norms v2", 1))
    assert dispatch(["solve", "--norms", str(path), "--out", str(tmp_path / "p.csv")]) == 2
    assert not (tmp_path / "p.csv").exists()


def test_usage_errors_exit_with_two(tmp_path, norms_file):
    out = str(tmp_path / "p.csv")
    assert dispatch(["norms", "--bogus"]) == 2
    assert dispatch(["solve", "--norms", str(tmp_path / "absent.csv"), "--out", out]) == 2
    assert dispatch(["solve", "--norms", norms_file, "--tol", "1e-20", "--out", out]) == 2
    assert dispatch(["solve", "--norms", norms_file, "--phi", "3.2", "--out", out]) == 2


def test_stats_command(tmp_path, norms_file):
    pert = str(tmp_path / "p.csv")
    report = tmp_path / "stats.json"
    assert dispatch(["solve", "--norms", norms_file, "--out", pert]) == 0
    args = ["stats", "--norms", norms_file, "--perturbed", pert, "--min-levels", "10", "--out", str(report)]
    assert dispatch(args) == 0
    payload = json.loads(report.read_text())
    assert payload["schema"] == "seba-report v1"
    assert payload["ratio"] > 0.0
    assert payload["N"] >= 10
    assert payload["config"]["command"] == "stats"


def test_stats_with_too_few_levels_is_a_computation_failure(tmp_path, norms_file):
    pert = str(tmp_path / "p.csv")
    assert dispatch(["solve", "--norms", norms_file, "--out", pert]) == 0
    args = ["stats", "--norms", norms_file, "--perturbed", pert, "--out", str(tmp_path / "s.json")]
    assert dispatch(args) == 1


def test_greedy_target(capsys):
    assert dispatch(["greedy3", "--coeffs", "1,1,1", "--target", "123456.789"]) == 0
    header, row = capsys.readouterr().out.splitlines()
    assert header.split(",")[0] == "t"
    fields = [float(value) for value in row.split(",")]
    assert fields[1:4] == [351.0, 15.0, 5.0]
    assert fields[-1] == pytest.approx(5.789, abs=1e-8)


def test_greedy_target_needs_coefficients():
    assert dispatch(["greedy3", "--target", "10"]) == 2


def test_version(capsys):
    assert dispatch(["--version"]) == 0
    assert capsys.readouterr().out.startswith("seba-toolkit ")


def test_config_file_supplies_flags(tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text("coeffs=1,1\ncutoff=10\n")
    out = tmp_path / "norms.csv"
    assert dispatch(["norms", "--config", str(config), "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 10
    assert dispatch(["--config", str(config), "norms", "--cutoff", "5", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0].endswith("cutoff=5 merge_tol=0")


def test_stats_beyond_the_solved_range_uses_the_last_norm(tmp_path, norms_file, capsys):
    pert = str(tmp_path / "p.csv")
    report = tmp_path / "stats.json"
    assert dispatch(["solve", "--norms", norms_file, "--out", pert]) == 0
    args = ["stats", "--norms", norms_file, "--perturbed", pert, "--xmax", "1e9", "--min-levels", "10"]
    assert dispatch(args + ["--out", str(report)]) == 0
    payload = json.loads(report.read_text())
    assert payload["x"] == 100.0
    assert "beyond the last solved norm" in capsys.readouterr().err
