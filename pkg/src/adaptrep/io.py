"""JSON helpers: matrices are stored as ``{"shape": [...], "data": [...]}`` in row-major order."""

import json
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "adaptrep/1"

__all__ = ["SCHEMA_VERSION", "encode_array", "decode_array", "write_json", "read_json"]


def encode_array(a):
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.ravel(order="C").tolist()}


def decode_array(obj):
    return np.asarray(obj["data"], dtype=float).reshape(obj["shape"], order="C")


def write_json(path, payload, kind):
    doc = {"schema": SCHEMA_VERSION, "kind": kind, **payload}
    text = json.dumps(doc, indent=1, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path, kind):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing input file: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("schema") != SCHEMA_VERSION:
        raise ValueError(
            f"{path}: schema version {doc.get('schema')!r} does not match {SCHEMA_VERSION!r}"
        )
    if doc.get("kind") != kind:
        raise ValueError(f"{path}: expected a {kind!r} document, found {doc.get('kind')!r}")
    return doc
