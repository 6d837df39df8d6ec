"""Deterministic table and JSON writers plus file digests.

Floats in CSV files are written with 17 significant digits (``.17g``) so the
text round-trips exactly and is identical across platforms; JSON uses
Python's shortest round-trip ``repr`` with sorted keys.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os

import numpy as np

__all__ = ["format_value", "write_table", "write_json", "read_table", "sha256_file"]


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    return v


def write_json(path, obj):
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def write_table(out_dir, name, columns, rows, fmt="csv"):
    """Write ``rows`` under ``columns`` as ``name.csv``, ``name.json`` or ``name.dat``.

    The JSON form is ``{"columns": [...], "rows": [[...], ...]}`` so column
    order is explicit in every format; ``dat`` is a whitespace-separated
    table with a ``#`` header line for plotting tools.  Returns the written
    path.
    """
    columns = list(columns)
    if fmt == "csv":
        path = os.path.join(out_dir, f"{name}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([format_value(v) for v in row])
        return path
    if fmt == "dat":
        # whitespace table for plotting tools; header is a comment line
        path = os.path.join(out_dir, f"{name}.dat")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("# " + " ".join(columns) + "\n")
            for row in rows:
                fh.write(" ".join(format_value(v) for v in row) + "\n")
        return path
    if fmt == "json":
        path = os.path.join(out_dir, f"{name}.json")
        return write_json(path, {"columns": columns, "rows": [list(r) for r in rows]})
    raise ValueError(f"unknown format {fmt!r}")


def read_table(path):
    """Read a CSV written by :func:`write_table` into ``(columns, rows)`` of strings."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        return columns, [row for row in reader]


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
