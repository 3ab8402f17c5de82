"""Deterministic report emission: canonical JSON and CSV tables.

Reports embed the run configuration and a content hash of the scenario
builder source, and contain no timestamps, so identical configurations
produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import inspect
import json
from pathlib import Path


def builder_hash(fn):
    """Git-style content hash of a builder: sha1 of its source text."""
    try:
        source = inspect.getsource(fn)
    except (OSError, TypeError):
        source = repr(fn)
    blob = source.encode()
    return hashlib.sha1(b"blob %d\x00" % len(blob) + blob).hexdigest()


def canonical_json(payload):
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _jsonable(value):
    import math

    import numpy as np

    if isinstance(value, (np.floating, np.integer)):
        value = value.item()
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_report(output_dir, report, tables=None):
    """Write report.json and tables/<name>.csv under ``output_dir``;
    returns the report path."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.json"
    path.write_text(canonical_json(_jsonable(report)))
    if tables:
        tdir = out / "tables"
        tdir.mkdir(exist_ok=True)
        for name, (header, rows) in tables.items():
            with open(tdir / f"{name}.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                for row in rows:
                    writer.writerow([_jsonable(v) for v in row])
    return path


def write_dat(output_dir, name, columns):
    """Plot-ready whitespace-separated columns."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.dat"
    lines = [" ".join(f"{v:.12g}" for v in row) for row in zip(*columns)]
    path.write_text("\n".join(lines) + "\n")
    return path
