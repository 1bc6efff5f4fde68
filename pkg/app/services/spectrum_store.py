"""
Flat-file storage for spectra and reports.

File formats:
    # seba-norms v1 dim=2 coeffs=1,1 cutoff=10 merge_tol=1e-10
    n,r
    0,1
    ...

    # seba-perturbed v1 phi=1.5707963267948966 tol=1e-12 xmax=1000 rhs=...
    j,lambda,residual,d
    ...

Every write goes to a temporary file in the target directory and is moved
into place with os.replace, so a target path never holds a partial file.
Cached artifacts sit next to a JSON manifest {params_hash, content_sha256, schema}.
"""

import hashlib
import io
import json
import logging
import os
import tempfile
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.errors import DomainError, SchemaVersionError, UsageError
from app.models.lattice import DiagonalForm, NormSpectrum
from app.models.reports import HEAT_COLUMNS, HeatTracePoint
from app.models.spectrum import PerturbedSpectrum, ScattererPhase

logger = logging.getLogger(__name__)

NORMS_SCHEMA = "seba-norms"
PERTURBED_SCHEMA = "seba-perturbed"
HEAT_SCHEMA = "seba-heat"
SCHEMA_VERSION = "v1"

NORMS_COLUMNS = "n,r"
PERTURBED_COLUMNS = "j,lambda,residual,d"


# ============ ATOMIC WRITES ============

def atomic_write_text(path: str, text: str) -> None:
    """Write text to path through a temporary sibling file and os.replace."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def write_json(path: str, payload: Mapping[str, Any]) -> None:
    atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


# ============ HEADERS ============

def _header(schema: str, fields: Mapping[str, Any]) -> str:
    parts = [f"{key}={value}" for key, value in fields.items()]
    return " ".join([f"# {schema}", SCHEMA_VERSION, *parts])


def _parse_header(path: str, line: str, schema: str) -> Dict[str, str]:
    tokens = line.strip().split()
    if len(tokens) < 3 or tokens[0] != "#":
        raise SchemaVersionError(path, line.strip()[:40] or "<empty>", f"{schema} {SCHEMA_VERSION}")
    found = f"{tokens[1]} {tokens[2]}"
    if tokens[1] != schema or tokens[2] != SCHEMA_VERSION:
        raise SchemaVersionError(path, found, f"{schema} {SCHEMA_VERSION}")
    fields = {}
    for token in tokens[3:]:
        key, sep, value = token.partition("=")
        if not sep:
            raise UsageError(f"{path}: malformed header field '{token}'")
        fields[key] = value
    return fields


def _read_table(path: str, schema: str, columns: str) -> Tuple[Dict[str, str], np.ndarray]:
    with open(path, encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    if not lines:
        raise SchemaVersionError(path, "<empty>", f"{schema} {SCHEMA_VERSION}")
    fields = _parse_header(path, lines[0], schema)
    if len(lines) < 2 or lines[1].strip() != columns:
        raise UsageError(f"{path}: expected column line '{columns}'")
    width = columns.count(",") + 1
    rows = [line for line in lines[2:] if line.strip()]
    if not rows:
        return fields, np.zeros((0, width))
    try:
        table = np.loadtxt(rows, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise UsageError(f"{path}: unreadable row ({exc})") from exc
    if table.shape[1] != width:
        raise UsageError(f"{path}: rows must have {width} columns")
    return fields, table


def _require(path: str, fields: Mapping[str, str], key: str) -> str:
    if key not in fields:
        raise UsageError(f"{path}: header lacks '{key}='")
    return fields[key]


# ============ NORMS ============

def format_norms(spec: NormSpectrum) -> str:
    if spec.form is None:
        raise UsageError("only spectra of a form can be stored")
    header = _header(
        NORMS_SCHEMA,
        {
            "dim": spec.form.dim,
            "coeffs": spec.form.label(),
            "cutoff": format(spec.cutoff, ".17g"),
            "merge_tol": format(spec.merge_tol, ".17g"),
        },
    )
    buffer = io.StringIO()
    buffer.write(header + "\n" + NORMS_COLUMNS + "\n")
    for n, r in zip(spec.norms, spec.mults):
        buffer.write(f"{float(n):.17g},{int(r)}\n")
    return buffer.getvalue()


def write_norms(spec: NormSpectrum, path: str) -> None:
    atomic_write_text(path, format_norms(spec))
    logger.info("✅ Wrote %d norms to %s", len(spec), path)


def read_norms(path: str) -> NormSpectrum:
    """
    Read a norms file.

    Raises:
        FileNotFoundError: path does not exist
        SchemaVersionError: header is not 'seba-norms v1'
    """
    fields, table = _read_table(path, NORMS_SCHEMA, NORMS_COLUMNS)
    try:
        form = DiagonalForm.parse(_require(path, fields, "coeffs"))
    except DomainError as exc:
        raise UsageError(f"{path}: {exc}") from exc
    if int(_require(path, fields, "dim")) != form.dim:
        raise UsageError(f"{path}: dim does not match the coefficients")
    cutoff = float(_require(path, fields, "cutoff"))
    merge_tol = float(fields.get("merge_tol", "0"))
    norms = table[:, 0]
    mults = table[:, 1].astype(np.int64)
    if form.is_exact:
        den = form.common_denominator
        numerators = np.rint(norms * den).astype(np.int64)
        return NormSpectrum(norms, mults, cutoff, form=form, merge_tol=0.0, numerators=numerators, denominator=den)
    return NormSpectrum(norms, mults, cutoff, form=form, merge_tol=merge_tol)


# ============ PERTURBED ============

def format_perturbed(pert: PerturbedSpectrum) -> str:
    header = _header(
        PERTURBED_SCHEMA,
        {
            "phi": format(pert.phase.phi, ".17g"),
            "tol": format(pert.tol, ".17g"),
            "xmax": format(pert.x_max, ".17g"),
            "rhs": format(pert.rhs, ".17g"),
        },
    )
    buffer = io.StringIO()
    buffer.write(header + "\n" + PERTURBED_COLUMNS + "\n")
    for j, (lam, res, d) in enumerate(zip(pert.lambdas, pert.residuals, pert.gaps)):
        buffer.write(f"{j},{float(lam):.17g},{float(res):.17g},{float(d):.17g}\n")
    return buffer.getvalue()


def write_perturbed(pert: PerturbedSpectrum, path: str) -> None:
    atomic_write_text(path, format_perturbed(pert))
    logger.info("✅ Wrote %d perturbed levels to %s", len(pert), path)


def read_perturbed(path: str) -> PerturbedSpectrum:
    """
    Read a perturbed-spectrum file.

    Raises:
        FileNotFoundError: path does not exist
        SchemaVersionError: header is not 'seba-perturbed v1'
    """
    fields, table = _read_table(path, PERTURBED_SCHEMA, PERTURBED_COLUMNS)
    if table.shape[0] == 0:
        raise UsageError(f"{path}: no levels stored")
    if np.any(table[:, 0] != np.arange(table.shape[0])):
        raise UsageError(f"{path}: level indices must run 0, 1, 2, ...")
    return PerturbedSpectrum(
        phase=ScattererPhase(float(_require(path, fields, "phi"))),
        rhs=float(_require(path, fields, "rhs")),
        tol=float(_require(path, fields, "tol")),
        x_max=float(_require(path, fields, "xmax")),
        lambdas=table[:, 1],
        residuals=table[:, 2],
        gaps=table[:, 3],
    )


# ============ REPORTS ============

def format_heat(points: Sequence[HeatTracePoint], config: Optional[Mapping[str, Any]] = None) -> str:
    buffer = io.StringIO()
    buffer.write(f"# {HEAT_SCHEMA} {SCHEMA_VERSION}")
    if config is not None:
        buffer.write(" config=" + json.dumps(config, sort_keys=True, separators=(",", ":")))
    buffer.write("\n" + ",".join(HEAT_COLUMNS) + "\n")
    for point in points:
        buffer.write(",".join(format(v, ".17g") for v in point.to_row()) + "\n")
    return buffer.getvalue()


def write_heat(points: Sequence[HeatTracePoint], path: str, config: Optional[Mapping[str, Any]] = None) -> None:
    atomic_write_text(path, format_heat(points, config))


# ============ CACHE ============

class SpectrumCache:
    """
    Directory of cached artifacts keyed by the hash of their upstream parameters.

    An artifact is reused only when its manifest names the same parameter
    hash and the file still has the recorded content digest.
    """

    def __init__(self, directory: str):
        self.directory = directory

    def path(self, name: str) -> str:
        return os.path.join(self.directory, f"{name}.csv")

    def manifest_path(self, name: str) -> str:
        return os.path.join(self.directory, f"{name}.manifest.json")

    def lookup(self, name: str, params_hash: str, schema: str) -> Optional[str]:
        """Path of a valid cached artifact, or None when missing or stale."""
        path = self.path(name)
        manifest_path = self.manifest_path(name)
        if not (os.path.isfile(path) and os.path.isfile(manifest_path)):
            return None
        try:
            with open(manifest_path, encoding="utf-8") as handle:
                manifest = json.load(handle)
        except (OSError, ValueError):
            logger.warning("⚠️ Unreadable cache manifest %s; recomputing", manifest_path)
            return None
        if manifest.get("params_hash") != params_hash or manifest.get("schema") != schema:
            logger.info("📦 Cache for %s is stale (parameters changed)", name)
            return None
        if manifest.get("content_sha256") != file_sha256(path):
            logger.warning("⚠️ Cache for %s does not match its digest; recomputing", name)
            return None
        logger.info("📦 Cache hit for %s", name)
        return path

    def store(self, name: str, params_hash: str, schema: str, writer: Callable[[str], None]) -> str:
        """Write an artifact with writer(path) and record its manifest."""
        path = self.path(name)
        writer(path)
        write_json(
            self.manifest_path(name),
            {"params_hash": params_hash, "content_sha256": file_sha256(path), "schema": schema},
        )
        return path
