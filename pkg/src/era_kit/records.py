"""Run records and summaries.

A run record is a newline-delimited JSON file: the first line is a header
object (kind, config echo, seed, and the only timestamp in the file), every
following line is one eval-point row.  Keeping the timestamp out of the rows
makes reruns byte-identical below the header, which is what the determinism
checks diff against.
"""

from __future__ import annotations

import csv
import json
from datetime import datetime, timezone
from pathlib import Path


def write_run_record(path: str | Path, header: dict, rows: list[dict]) -> Path:
    """Write header + rows as JSON lines; adds a created timestamp to the
    header (the single non-deterministic line)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = dict(header)
    head["created"] = datetime.now(timezone.utc).isoformat()
    with open(path, "w") as f:
        f.write(json.dumps(head, sort_keys=True) + "\n")
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")
    return path


def read_run_record(path: str | Path) -> tuple[dict, list[dict]]:
    with open(path) as f:
        lines = [line for line in f if line.strip()]
    if not lines:
        raise ValueError(f"empty run record: {path}")
    return json.loads(lines[0]), [json.loads(line) for line in lines[1:]]


def _numeric_keys(rows: list[dict]) -> list[str]:
    keys = []
    for key, value in rows[0].items():
        if key != "step" and isinstance(value, (int, float)) and not isinstance(value, bool):
            keys.append(key)
    return keys


def summarize_records(record_paths: list[str | Path]) -> list[dict]:
    """Per-step mean and std over seeds for every numeric metric.

    All records must share the same step grid.
    """
    import numpy as np

    if not record_paths:
        raise ValueError("no records to summarize")
    loaded = [read_run_record(p) for p in record_paths]
    grids = [[r.get("step", r.get("epoch", i)) for i, r in enumerate(rows)]
             for _, rows in loaded]
    if any(g != grids[0] for g in grids[1:]):
        raise ValueError("records have mismatched step grids")
    keys = _numeric_keys(loaded[0][1])
    out = []
    for i, step in enumerate(grids[0]):
        row = {"step": step, "n_seeds": len(loaded)}
        for key in keys:
            vals = np.array([rows[i][key] for _, rows in loaded], dtype=np.float64)
            row[f"{key}_mean"] = float(vals.mean())
            row[f"{key}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        out.append(row)
    return out


def write_csv(path: str | Path, rows: list[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    return path


def compare_records(record_paths: list[str | Path]) -> list[dict]:
    """Aligned per-step metric deltas of each record against the first.

    Requires at least two records with identical step grids.  Output rows
    carry one `<metric>_delta_<j>` column per later record j.
    """
    if len(record_paths) < 2:
        raise ValueError("need at least two records to compare")
    loaded = [read_run_record(p) for p in record_paths]
    grids = [[r.get("step", r.get("epoch", i)) for i, r in enumerate(rows)]
             for _, rows in loaded]
    if any(g != grids[0] for g in grids[1:]):
        raise ValueError("records have mismatched step grids")
    base_rows = loaded[0][1]
    keys = _numeric_keys(base_rows)
    out = []
    for i, step in enumerate(grids[0]):
        row = {"step": step}
        for j, (_, rows) in enumerate(loaded[1:], start=1):
            for key in keys:
                if key in rows[i]:
                    row[f"{key}_delta_{j}"] = rows[i][key] - base_rows[i][key]
        out.append(row)
    return out
