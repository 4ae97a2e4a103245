"""Versioned JSON schema for fields and matrices on disk.

A field file is a JSON object

    {
      "format": "fieldfile/1",
      "n": 2, "m": 1,
      "metadata": {...},              # optional string map
      "records": [
        {"point_id": "p0", "weight": 1.0, "matrix": [1.0, 0.0]},
        ...
      ]
    }

with matrices stored row-major and numbers written in full round-trip
precision.  Single matrices (fiber-level inputs) are field files with
exactly one record.  Weights must be positive, matrix lengths must equal
n*m, and point ids must be unique.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputFormatError
from .fields import OneFormField, SampledManifold, canonicalize

FORMAT = "fieldfile/1"


@dataclass
class FieldFile:
    """Parsed, validated contents of a field file."""

    n: int
    m: int
    point_ids: list
    weights: np.ndarray
    matrices: np.ndarray  # (N, n, m)
    metadata: dict = field(default_factory=dict)


def _require(obj, key, kind, where):
    if key not in obj:
        raise InputFormatError(f"{where}.{key}", "missing required field")
    val = obj[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise InputFormatError(f"{where}.{key}", "must be a number")
        return float(val)
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise InputFormatError(f"{where}.{key}", "must be an integer")
        return val
    if not isinstance(val, kind):
        raise InputFormatError(
            f"{where}.{key}", f"must be of type {kind.__name__}"
        )
    return val


def parse_field_file(data, where="fieldfile"):
    """Validate a decoded JSON object against the schema."""
    if not isinstance(data, dict):
        raise InputFormatError(where, "top level must be a JSON object")
    fmt = _require(data, "format", str, where)
    if fmt != FORMAT:
        raise InputFormatError(
            f"{where}.format", f"unsupported version {fmt!r}; expected {FORMAT!r}"
        )
    n = _require(data, "n", int, where)
    m = _require(data, "m", int, where)
    if n < 1 or m < 1:
        raise InputFormatError(f"{where}.n", "dimensions must be positive")
    records = _require(data, "records", list, where)
    if not records:
        raise InputFormatError(f"{where}.records", "at least one record required")
    metadata = data.get("metadata", {})
    if not isinstance(metadata, dict):
        raise InputFormatError(f"{where}.metadata", "must be an object")
    ids, weights, mats = [], [], []
    for i, rec in enumerate(records):
        at = f"{where}.records[{i}]"
        if not isinstance(rec, dict):
            raise InputFormatError(at, "record must be an object")
        pid = _require(rec, "point_id", str, at)
        weight = _require(rec, "weight", float, at)
        if not np.isfinite(weight) or weight <= 0.0:
            raise InputFormatError(f"{at}.weight", "must be positive and finite")
        matrix = _require(rec, "matrix", list, at)
        if len(matrix) != n * m:
            raise InputFormatError(
                f"{at}.matrix", f"expected {n * m} numbers (n*m), got {len(matrix)}"
            )
        try:
            arr = np.asarray(matrix, dtype=float).reshape(n, m)
        except (TypeError, ValueError):
            raise InputFormatError(f"{at}.matrix", "entries must be numbers")
        if not np.all(np.isfinite(arr)):
            raise InputFormatError(f"{at}.matrix", "entries must be finite")
        ids.append(pid)
        weights.append(weight)
        mats.append(arr)
    if len(set(ids)) != len(ids):
        raise InputFormatError(f"{where}.records", "point_id values must be unique")
    return FieldFile(
        n=n,
        m=m,
        point_ids=ids,
        weights=np.asarray(weights),
        matrices=np.asarray(mats),
        metadata=metadata,
    )


def read_field_file(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise InputFormatError(str(path), "file not found")
    except json.JSONDecodeError as err:
        raise InputFormatError(str(path), f"invalid JSON: {err}")
    return parse_field_file(data, where=str(path))


def write_field_file(path, n, m, point_ids, weights, matrices, metadata=None):
    records = [
        {
            "point_id": str(pid),
            "weight": float(w),
            "matrix": [float(x) for x in np.asarray(mat).ravel()],
        }
        for pid, w, mat in zip(point_ids, weights, matrices)
    ]
    doc = {"format": FORMAT, "n": int(n), "m": int(m), "records": records}
    if metadata:
        doc["metadata"] = metadata
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def manifold_of(ff, expect_n_gt_m=True, where="fieldfile"):
    if expect_n_gt_m and not ff.n > ff.m:
        raise InputFormatError(
            f"{where}.n", f"need n > m for one-form fields, got ({ff.n}, {ff.m})"
        )
    return SampledManifold(tuple(ff.point_ids), ff.weights, ff.n, ff.m)


def to_one_form(ff, rank_tol, where="fieldfile"):
    return OneFormField(manifold_of(ff, True, where), ff.matrices, rank_tol)


def to_completion(ff, rank_tol, where="fieldfile"):
    return canonicalize(ff.matrices, manifold_of(ff, True, where), rank_tol)


def single_matrix(ff, where="fieldfile"):
    """Extract the one matrix of a single-record file."""
    if len(ff.point_ids) != 1:
        raise InputFormatError(
            f"{where}.records",
            f"expected exactly one record for a matrix input, got "
            f"{len(ff.point_ids)}",
        )
    return ff.matrices[0]


def write_one_form(path, field_like, metadata=None):
    man = field_like.manifold
    write_field_file(
        path, man.n, man.m, man.point_ids, man.weights, field_like.values,
        metadata,
    )


def write_metric_field(path, mf, metadata=None):
    man = mf.manifold
    write_field_file(
        path, man.m, man.m, man.point_ids, man.weights, mf.values, metadata
    )


def write_rotation_field(path, rf, metadata=None):
    man = rf.manifold
    write_field_file(
        path, man.n, man.n, man.point_ids, man.weights, rf.values, metadata
    )
