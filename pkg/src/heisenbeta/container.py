"""Self-describing grid containers, binary and JSON debug form.

Both graph grids and cube grid functions serialize through the same
layout: an 8-byte magic, a little-endian uint32 header length, a UTF-8
JSON header, then the row-major float64 little-endian payload.  The JSON
debug form carries the same header with the values as nested lists.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"HBGRID1\n"

__all__ = ["write_binary", "read_binary", "write_json", "read_json"]


def _check_header(header: dict) -> dict:
    if "kind" not in header or "shape" not in header:
        raise ValueError("container header needs 'kind' and 'shape'")
    return header


def write_binary(path, header: dict, values: np.ndarray) -> None:
    header = dict(_check_header(header))
    values = np.ascontiguousarray(values, dtype="<f8")
    header["shape"] = list(values.shape)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(len(blob)).astype("<u4").tobytes())
        fh.write(blob)
        fh.write(values.tobytes(order="C"))


def read_binary(path) -> tuple[dict, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a grid container (bad magic)")
    off = len(MAGIC)
    (hlen,) = np.frombuffer(raw[off : off + 4], dtype="<u4")
    off += 4
    header = json.loads(raw[off : off + int(hlen)].decode("utf-8"))
    off += int(hlen)
    shape = tuple(header["shape"])
    count = int(np.prod(shape))
    values = np.frombuffer(raw[off:], dtype="<f8", count=count).reshape(shape)
    return _check_header(header), values.astype(float)


def write_json(path, header: dict, values: np.ndarray) -> None:
    header = dict(_check_header(header))
    values = np.asarray(values, dtype=float)
    header["shape"] = list(values.shape)
    doc = {"header": header, "values": values.tolist()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def read_json(path) -> tuple[dict, np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    header = _check_header(doc["header"])
    values = np.asarray(doc["values"], dtype=float).reshape(tuple(header["shape"]))
    return header, values
