"""File formats: the TNSR binary tensor container, a JSON text
alternative for hand-authored fixtures, and deterministic JSON/CSV
writers (no timestamps, stable key order, repr floats)."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .core import check_shape, ensure_tensor

TNSR_MAGIC = b"TNSR"
TNSR_VERSION = 1


def write_tensor(path, data, shape) -> None:
    """Write a tensor; .json gets the text form, anything else binary.

    Binary layout (little-endian): magic "TNSR", u32 version, u8 rank,
    u32 dims[rank], f64 data[prod(dims)].
    """
    path = Path(path)
    shape = check_shape(shape)
    flat = ensure_tensor(data, shape)
    if path.suffix == ".json":
        payload = {"shape": list(shape), "data": [float(v) for v in flat]}
        path.write_text(json.dumps(payload, sort_keys=True) + "\n")
        return
    with open(path, "wb") as fh:
        fh.write(TNSR_MAGIC)
        fh.write(struct.pack("<I", TNSR_VERSION))
        fh.write(struct.pack("<B", len(shape)))
        fh.write(struct.pack(f"<{len(shape)}I", *shape))
        fh.write(struct.pack(f"<{flat.size}d", *flat))


def read_tensor(path) -> tuple[np.ndarray, tuple[int, ...]]:
    """Read a tensor written by write_tensor; returns (flat data, shape)."""
    path = Path(path)
    if path.suffix == ".json":
        payload = json.loads(path.read_text())
        shape = check_shape(payload["shape"])
        return ensure_tensor(payload["data"], shape), shape
    raw = path.read_bytes()
    if raw[:4] != TNSR_MAGIC:
        raise ValueError(f"{path} is not a TNSR file")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != TNSR_VERSION:
        raise ValueError(f"unsupported TNSR version {version}")
    (rank,) = struct.unpack_from("<B", raw, 8)
    dims = struct.unpack_from(f"<{rank}I", raw, 9)
    shape = check_shape(dims)
    offset = 9 + 4 * rank
    count = int(np.prod(dims))
    data = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
    return ensure_tensor(data, shape), shape


def dump_json(path, payload) -> None:
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def dump_csv(path, header: list[str], rows) -> None:
    """Deterministic CSV with repr-formatted floats."""

    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return str(v)

    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def attribution_payload(attr, shape, block, seed) -> dict:
    """The attribution JSON schema shared by the explain/oracle commands."""
    return {
        "method": attr.method,
        "class": attr.class_index,
        "base_value": attr.base_value,
        "shape": list(shape),
        "block": list(block),
        "values": [float(v) for v in attr.values],
        "evals_used": attr.evals_used,
        "max_evals": attr.max_evals,
        "seed": seed,
    }
