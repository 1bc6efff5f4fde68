"""
Tests for spectrum files, atomic writes and the artifact cache.
"""

import json
import os

import numpy as np
import pytest

from app.errors import SchemaVersionError, UsageError
from app.models.reports import HeatTracePoint
from app.services.lattice import enumerate_norms
from app.services.spectrum_store import (
    NORMS_SCHEMA,
    SpectrumCache,
    atomic_write_text,
    format_heat,
    format_norms,
    read_norms,
    read_perturbed,
    write_norms,
    write_perturbed,
)


@pytest.fixture
def small_square(square_form):
    return enumerate_norms(square_form, 10.0)


# ============ NORMS FILES ============

def test_norms_file_layout(small_square):
    lines = format_norms(small_square).splitlines()
    assert lines[0] == "# seba-norms v1 dim=2 coeffs=1,1 cutoff=10 merge_tol=0"
    assert lines[1] == "n,r"
    assert lines[2] == "0,1"
    assert lines[6] == "5,8"
    assert len(lines) == 2 + 8


def test_norms_file_reads_back(tmp_path, small_square):
    path = str(tmp_path / "norms.csv")
    write_norms(small_square, path)
    spec = read_norms(path)
    assert spec.form.is_exact
    assert spec.fingerprint() == small_square.fingerprint()
    assert np.array_equal(spec.numerators, small_square.numerators)


def test_unsupported_schema_version(tmp_path, small_square):
    path = tmp_path / "norms.csv"
    text = format_norms(small_square).replace("seba-norms v1", "seba-norms v2", 1)
    path.write_text(text)
    with pytest.raises(SchemaVersionError) as info:
        read_norms(str(path))
    assert info.value.found == "seba-norms v2"
    assert info.value.exit_code == 2


def test_wrong_schema_name(tmp_path, square_pert):
    path = str(tmp_path / "perturbed.csv")
    write_perturbed(square_pert, path)
    with pytest.raises(SchemaVersionError):
        read_norms(path)


def test_malformed_rows_are_usage_errors(tmp_path, small_square):
    path = tmp_path / "norms.csv"
    path.write_text(format_norms(small_square) + "abc,def\n")
    with pytest.raises(UsageError):
        read_norms(str(path))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_norms(str(tmp_path / "absent.csv"))


# ============ PERTURBED FILES ============

def test_perturbed_file_reads_back(tmp_path, square_pert):
    path = str(tmp_path / "perturbed.csv")
    write_perturbed(square_pert, path)
    pert = read_perturbed(path)
    assert np.array_equal(pert.lambdas, square_pert.lambdas)
    assert np.array_equal(pert.gaps, square_pert.gaps)
    assert pert.rhs == square_pert.rhs
    assert pert.phase == square_pert.phase
    assert pert.floors is None
    with open(path) as handle:
        assert handle.readline().startswith("# seba-perturbed v1 phi=1.5707963267948966 ")


def test_perturbed_indices_must_be_consecutive(tmp_path, square_pert):
    path = tmp_path / "perturbed.csv"
    write_perturbed(square_pert, str(path))
    lines = path.read_text().splitlines()
    lines[3] = "7" + lines[3][lines[3].index(","):]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(UsageError):
        read_perturbed(str(path))


# ============ ATOMIC WRITES ============

def test_failed_write_keeps_previous_file(tmp_path):
    path = tmp_path / "report.json"
    atomic_write_text(str(path), "old\n")
    with pytest.raises(TypeError):
        atomic_write_text(str(path), 123)
    assert path.read_text() == "old\n"
    assert [p.name for p in tmp_path.iterdir()] == ["report.json"]


def test_heat_report_header():
    point = HeatTracePoint(
        beta=0.1, a_tilde=2.0, difference_form=1.5, discrepancy=0.5, scaled_2d=0.46, scaled_3d=0.2
    )
    lines = format_heat([point], {"dim": 2}).splitlines()
    assert lines[0] == '# seba-heat v1 config={"dim":2}'
    assert lines[1] == "beta,a_tilde,difference_form,discrepancy,scaled_2d,scaled_3d"
    assert lines[2].startswith("0.10000000000000001,2,1.5,")


# ============ CACHE ============

def _store(cache: SpectrumCache, spec, key: str) -> str:
    return cache.store("norms", key, NORMS_SCHEMA, lambda target: write_norms(spec, target))


def test_cache_hit_after_store(tmp_path, small_square):
    cache = SpectrumCache(str(tmp_path))
    path = _store(cache, small_square, "abc")
    assert cache.lookup("norms", "abc", NORMS_SCHEMA) == path
    manifest = json.loads(open(cache.manifest_path("norms")).read())
    assert set(manifest) == {"params_hash", "content_sha256", "schema"}


def test_cache_miss_on_changed_parameters(tmp_path, small_square):
    cache = SpectrumCache(str(tmp_path))
    _store(cache, small_square, "abc")
    assert cache.lookup("norms", "other", NORMS_SCHEMA) is None


def test_cache_miss_on_edited_artifact(tmp_path, small_square):
    cache = SpectrumCache(str(tmp_path))
    path = _store(cache, small_square, "abc")
    with open(path, "a") as handle:
        handle.write("11,4\n")
    assert cache.lookup("norms", "abc", NORMS_SCHEMA) is None


def test_cache_miss_on_broken_manifest(tmp_path, small_square):
    cache = SpectrumCache(str(tmp_path))
    _store(cache, small_square, "abc")
    with open(cache.manifest_path("norms"), "w") as handle:
        handle.write("{not json")
    assert cache.lookup("norms", "abc", NORMS_SCHEMA) is None
    os.remove(cache.manifest_path("norms"))
    assert cache.lookup("norms", "abc", NORMS_SCHEMA) is None
