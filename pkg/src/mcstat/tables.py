"""CSV/JSON table output. Every CSV has a JSON twin carrying the same rows plus metadata."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .rawio import atomic_write_text


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def write_table(out_dir, name: str, rows: list, meta: dict | None = None, columns: list | None = None) -> Path:
    """Write ``<name>.csv`` and ``<name>.json`` into ``out_dir``; returns the CSV path."""
    out_dir = Path(out_dir)
    if columns is None:
        columns = []
        for row in rows:
            for key in row:
                if key not in columns:
                    columns.append(key)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: ("" if row.get(c) is None else row.get(c)) for c in columns})
    csv_path = out_dir / f"{name}.csv"
    atomic_write_text(csv_path, buf.getvalue())
    doc = {"table": name, "columns": columns, "rows": [{k: _clean(v) for k, v in r.items()} for r in rows]}
    if meta:
        doc.update(meta)
    atomic_write_text(out_dir / f"{name}.json", json.dumps(doc, indent=2, default=str))
    return csv_path


def read_csv(path) -> list:
    """Read a table back with numeric fields converted to float (empty -> None)."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            conv = {}
            for k, v in row.items():
                if v == "":
                    conv[k] = None
                    continue
                try:
                    conv[k] = float(v)
                except ValueError:
                    conv[k] = v
            out.append(conv)
    return out
