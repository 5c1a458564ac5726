"""Versioned binary checkpoints: magic, header length, JSON manifest, then little-endian array blobs."""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np

MAGIC = b"NAMOCKPT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIQ")  # magic, version, manifest byte length


class CheckpointError(ValueError):
    pass


def _le(dtype: np.dtype) -> np.dtype:
    return dtype.newbyteorder("<") if dtype.byteorder not in ("<", "|") else dtype


def save_checkpoint(path, arrays: Dict[str, np.ndarray], meta: Dict[str, Any], config_hash: str = "") -> Path:
    """Write atomically; identical inputs give byte-identical files."""
    path = Path(path)
    table = []
    offset = 0
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        arr = arr.astype(_le(arr.dtype), copy=False)
        raw = arr.tobytes()
        table.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape), "offset": offset,
                      "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    manifest = json.dumps({"version": FORMAT_VERSION, "config_hash": config_hash, "arrays": table, "meta": meta},
                          sort_keys=True, separators=(",", ":")).encode()
    tmp = path.with_name(path.name + ".tmp")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(tmp, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(manifest)))
        f.write(manifest)
        for b in blobs:
            f.write(b)
    os.replace(tmp, path)
    return path


def load_checkpoint(path) -> Tuple[Dict[str, np.ndarray], Dict[str, Any], str]:
    """Returns (arrays, meta, config_hash)."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, mlen = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
    start = _HEADER.size + mlen
    try:
        manifest = json.loads(data[_HEADER.size:start])
    except ValueError as exc:
        raise CheckpointError(f"{path}: corrupt manifest ({exc})") from None
    arrays = {}
    for entry in manifest["arrays"]:
        lo = start + entry["offset"]
        hi = lo + entry["nbytes"]
        if hi > len(data):
            raise CheckpointError(f"{path}: array {entry['name']} runs past end of file")
        arr = np.frombuffer(data[lo:hi], dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        arrays[entry["name"]] = arr.copy()
    return arrays, manifest["meta"], manifest["config_hash"]
