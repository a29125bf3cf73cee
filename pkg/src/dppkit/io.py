"""CSV ingestion and JSON/CSV output documents."""

from __future__ import annotations

import csv
import json
import os
import warnings

import numpy as np

from .errors import ValidationError

SCHEMA_VERSION = 1


def read_matrix(path):
    """Headerless, comma-separated, row-major float64 matrix; NaN/Inf rejected."""
    if not os.path.exists(path):
        raise ValidationError(f"input file {path!r} does not exist")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # numpy warns on empty files
        try:
            a = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
        except ValueError as exc:
            raise ValidationError(f"cannot parse {path!r} as a numeric CSV matrix: {exc}") from exc
    if a.size == 0:
        raise ValidationError(f"input file {path!r} is empty")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"input file {path!r} contains NaN or Inf")
    return a


def write_matrix(path, a):
    np.savetxt(path, np.atleast_2d(a), delimiter=",", fmt="%.17g")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def document(command, config, result, version):
    return {
        "schema_version": SCHEMA_VERSION,
        "dppkit_version": version,
        "command": command,
        "config": config,
        "result": result,
    }


def dump_json(doc, path=None):
    text = json.dumps(doc, default=_jsonable, indent=2, sort_keys=False)
    if path is None or path == "-":
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


def write_rows_csv(path, rows):
    if not rows:
        return
    fields = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow(r)
