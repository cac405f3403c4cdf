"""Result tables: fixed CSV schema plus a JSON metadata document with provenance."""

from __future__ import annotations

import csv
import json
import math
import os
import subprocess
from dataclasses import dataclass, field
from datetime import datetime, timezone

SCHEMA_VERSION = 1

COLUMNS = (
    "kind",
    "frequency",
    "omega",
    "omega_probe",
    "h",
    "ndof",
    "angle_error_low",
    "angle_error_high",
    "error_abs_low",
    "error_rel_low",
    "error_abs",
    "error_rel",
    "error_abs_exact_rays",
    "error_rel_exact_rays",
    "niter",
    "outer_converged",
    "iterations_probe",
    "iterations_high",
    "status",
)
TIMING_COLUMNS = ("time_probe", "time_learn", "time_solve", "time_high_setup", "time_high_krylov", "time_iterate", "time_total")
INT_COLUMNS = {"ndof", "niter", "iterations_probe", "iterations_high"}
STR_COLUMNS = {"kind", "status"}
BOOL_COLUMNS = {"outer_converged"}

__all__ = ["ResultTable", "row_from_result", "read_results", "write_results", "SCHEMA_VERSION", "COLUMNS", "TIMING_COLUMNS"]


def row_from_result(kind, result):
    """Flatten an ``ExperimentResult`` into a schema row."""
    row = {"kind": kind, "frequency": result.frequency}
    for c in COLUMNS[2:]:
        if c != "frequency":
            row[c] = getattr(result, c)
    t = result.timings
    row["time_probe"] = t.get("probe", math.nan)
    row["time_learn"] = t.get("learn", math.nan)
    row["time_solve"] = t.get("solve", math.nan)
    row["time_high_setup"] = t.get("high_setup", math.nan)
    row["time_high_krylov"] = t.get("high_krylov", math.nan)
    row["time_iterate"] = t.get("iterate", math.nan)
    row["time_total"] = t.get("total", math.nan)
    return row


def failed_row(kind, frequency, status):
    row = {c: math.nan for c in COLUMNS + TIMING_COLUMNS}
    row.update(kind=kind, frequency=float(frequency), omega=2 * math.pi * frequency, status=status)
    for c in INT_COLUMNS:
        row[c] = 0
    row["outer_converged"] = False
    return row


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)
    include_timings: bool = True
    provenance: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @property
    def columns(self):
        return COLUMNS + TIMING_COLUMNS if self.include_timings else COLUMNS

    def column(self, name):
        return [r[name] for r in self.rows]

    def __len__(self):
        return len(self.rows)


def _fmt(name, v):
    if name in BOOL_COLUMNS:
        return "true" if v else "false"
    if name in INT_COLUMNS:
        return str(int(v))
    if name in STR_COLUMNS:
        return str(v)
    return repr(float(v))


def _parse(name, s):
    if name in BOOL_COLUMNS:
        return s == "true"
    if name in INT_COLUMNS:
        return int(s)
    if name in STR_COLUMNS:
        return s
    return float(s)


def _commit():
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5, cwd=os.path.dirname(__file__)
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def provenance(config):
    """Provenance block: config hash, timestamp, commit, resolved config and defaulted keys."""
    return {
        "config_hash": config.config_hash(),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "commit": _commit(),
        "config": config.resolved,
        "defaulted": list(config.defaulted),
    }


def write_results(table, outdir):
    """Write ``results.csv`` and ``results.meta`` (JSON) to ``outdir``; returns both paths."""
    os.makedirs(outdir, exist_ok=True)
    csv_path = os.path.join(outdir, "results.csv")
    meta_path = os.path.join(outdir, "results.meta")
    cols = table.columns
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in table.rows:
            w.writerow([_fmt(c, r[c]) for c in cols])
    meta = {
        "schema_version": table.schema_version,
        "columns": list(cols),
        "include_timings": table.include_timings,
        "provenance": table.provenance,
        "rows": [{c: r[c] for c in cols} for r in table.rows],
    }
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, default=str, allow_nan=True)
        fh.write("\n")
    return csv_path, meta_path


def read_results(outdir):
    """Inverse of ``write_results``."""
    with open(os.path.join(outdir, "results.meta")) as fh:
        meta = json.load(fh)
    with open(os.path.join(outdir, "results.csv"), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != meta["columns"]:
            raise ValueError("CSV header does not match the metadata schema")
        rows = [{c: _parse(c, v) for c, v in zip(header, line)} for line in reader]
    return ResultTable(rows, meta["include_timings"], meta["provenance"], meta["schema_version"])
