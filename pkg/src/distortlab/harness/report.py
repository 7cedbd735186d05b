"""CSV and JSON emission.

Row 1 of every CSV is a ``#`` comment carrying the schema version; row 2 is
the header.  Floats use 9 significant digits, missing values are empty and
booleans are written as 1/0, so the same rows always give the same bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

SCHEMA_VERSION = "distortlab-metrics/1"

METRICS_COLUMNS = ("scenario", "seed", "eps1", "round", "eps_p", "eps_u", "delta_extent",
                   "leak_bound", "gate", "c2", "cb", "p_exp")
FRONTIER_COLUMNS = ("scenario", "eps1", "mean_eps_p", "mean_eps_u", "mean_delta_extent",
                    "mean_leak_bound", "gate_fraction", "eps1_threshold")
CHECK_COLUMNS = ("entry", "client", "alpha", "check", "lhs", "rhs", "slack", "holds", "asserted")


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if not math.isfinite(value):
            return ""
        return f"{value:.9g}"
    return str(value)


def csv_text(rows, columns, kind: str) -> str:
    buf = io.StringIO()
    buf.write(f"# {SCHEMA_VERSION} {kind}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(path, rows, columns, kind: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(rows, columns, kind))
    return path


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "item"):  # numpy scalar
        return _jsonable(value.item())
    return value


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def read_csv_rows(path) -> list[dict]:
    """Parse a CSV written by :func:`write_csv` back into string-valued dicts."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ValueError("missing schema comment row")
    return list(csv.DictReader(lines[1:]))
