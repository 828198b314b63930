"""Serialization: canonical JSON reports, CSV flattening, raw sample dumps.

Determinism contract: identical inputs produce byte-identical files except
for the ``created_at`` stamp, which callers strip before comparing.  All
floats go through repr-faithful JSON (no rounding), NaN and infinity are
rejected rather than smuggled in as non-standard tokens, and CSV rows follow
the per-node order of the report.
"""

from __future__ import annotations

import csv
import json
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

__all__ = [
    "canonical_json",
    "load_schema",
    "validate_against",
    "validate_config",
    "validate_report",
    "validate_grid_override",
    "write_report",
    "report_csv_rows",
    "write_samples_dump",
    "read_samples_dump",
    "timestamp",
]


def _plain(obj):
    """Recursively convert numpy scalars/arrays so json sees pure Python."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if v != v or v in (float("inf"), float("-inf")):
            raise ValueError("non-finite value cannot be serialized to a report")
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json(obj, exclude: tuple[str, ...] = ("created_at",)) -> str:
    """Sorted-key compact JSON with volatile top-level keys removed.

    This is the string used for determinism comparisons; two runs agree iff
    their canonical forms are equal.
    """
    plain = _plain(obj)
    if isinstance(plain, dict):
        plain = {k: v for k, v in plain.items() if k not in exclude}
    return json.dumps(plain, sort_keys=True, separators=(",", ":"), allow_nan=False)


def timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


# ---------------------------------------------------------------------------
# schema plumbing


def load_schema(name: str) -> dict:
    """Load one of the published schemas (config, grid, report) by stem."""
    path = resources.files("harnacklab.schemas").joinpath(f"{name}.schema.json")
    return json.loads(path.read_text())


def validate_against(instance: dict, schema_name: str) -> None:
    """Raise jsonschema.ValidationError listing the first schema failure."""
    validator = Draft202012Validator(load_schema(schema_name))
    validator.validate(_plain(instance))


def validate_config(config: dict) -> None:
    validate_against(config, "config")


def validate_report(report: dict) -> None:
    validate_against(report, "report")


def validate_grid_override(grid: dict) -> None:
    validate_against(grid, "grid")


# ---------------------------------------------------------------------------
# report writing


def report_csv_rows(report: dict) -> tuple[list[str], list[list]]:
    """Flatten per_node entries to a rectangular table.

    Columns: the scalar node fields in a fixed order, then vector components
    expanded as x1..xd (y, z likewise).  Missing values are left empty.
    """
    nodes = report.get("per_node", [])
    d = 0
    has_z = False
    keys: list[str] = []
    for nd in nodes:
        d = max(d, len(nd.get("x", [])))
        has_z = has_z or "z" in nd
        for k in nd:
            if k not in ("x", "y", "z") and k not in keys:
                keys.append(k)
    header = []
    for k in keys:
        header.append(k)
        if k == "t":
            header.extend(f"x{i+1}" for i in range(d))
            header.extend(f"y{i+1}" for i in range(d))
            if has_z:
                header.extend(f"z{i+1}" for i in range(d))
    rows = []
    for nd in nodes:
        row = []
        for k in keys:
            row.append(nd.get(k, ""))
            if k == "t":
                for vec in ("x", "y") + (("z",) if has_z else ()):
                    comp = nd.get(vec, [])
                    row.extend(list(comp) + [""] * (d - len(comp)))
        rows.append(row)
    return header, rows


def write_report(report: dict, out: Path | str, fmt: str = "json") -> list[Path]:
    """Write a validated report as pretty JSON and/or flattened CSV.

    ``out`` is the JSON path; the CSV sibling swaps the suffix.  Returns the
    paths written.
    """
    if fmt not in ("json", "csv", "both"):
        raise ValueError(f"format must be json, csv or both, got {fmt!r}")
    report = _plain(report)
    validate_report(report)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("json", "both"):
        out.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
        written.append(out)
    if fmt in ("csv", "both"):
        csv_path = out.with_suffix(".csv")
        header, rows = report_csv_rows(report)
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        written.append(csv_path)
    return written


# ---------------------------------------------------------------------------
# raw sample dumps


def write_samples_dump(samples: np.ndarray, path: Path | str, sidecar: dict) -> tuple[Path, Path]:
    """Binary dump: little-endian float64, row-major, plus a JSON sidecar.

    The sidecar records at least n, d and whatever context the caller adds
    (t, spec, seed); n and d are always overwritten from the array shape so
    they cannot drift from the payload.
    """
    samples = np.ascontiguousarray(np.asarray(samples, dtype="<f8"))
    if samples.ndim != 2:
        raise ValueError("samples must be a 2-d array (n, d)")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    samples.tofile(path)
    meta = dict(sidecar)
    meta["n"], meta["d"] = int(samples.shape[0]), int(samples.shape[1])
    sidecar_path = path.with_suffix(path.suffix + ".json")
    sidecar_path.write_text(json.dumps(_plain(meta), sort_keys=True, indent=2) + "\n")
    return path, sidecar_path


def read_samples_dump(path: Path | str) -> tuple[np.ndarray, dict]:
    """Inverse of write_samples_dump."""
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    flat = np.fromfile(path, dtype="<f8")
    return flat.reshape(meta["n"], meta["d"]), meta
