"""JSON and CSV outputs that carry their provenance.

Every JSON artifact has a ``meta`` block with the resolved config, seed,
package version and SHA-256 of each input file. Floats are written with
Python's shortest round-trip repr, so reading them back is bit-exact.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def run_metadata(config: dict, seed: int | None, inputs=()) -> dict:
    return {
        "version": __version__,
        "seed": seed,
        "config": _plain(config),
        "inputs": {str(p): file_hash(p) for p in inputs},
    }


def write_json(path, payload: dict, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(_plain(payload))
    if meta is not None:
        doc["meta"] = meta
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_csv(path, columns, rows) -> Path:
    """``rows`` are dicts keyed by ``columns``; extra keys are an error."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in row.items()})
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
