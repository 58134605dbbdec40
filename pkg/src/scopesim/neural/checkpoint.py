"""Checkpoints: a JSON manifest next to a raw little-endian float32 blob.

``<stem>.json`` holds the network kind, spec, seed, step count and the
parameter layout; ``<stem>.bin`` holds the parameters. Loading gives back
bit-identical arrays.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

FORMAT = "scopesim-checkpoint/1"


def _paths(path) -> tuple[Path, Path]:
    p = Path(path)
    stem = p.with_suffix("") if p.suffix in (".json", ".bin") else p
    return stem.with_suffix(".json"), stem.with_suffix(".bin")


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict) -> Path:
    """Write named flat arrays (e.g. ``{"policy": ...}``) plus metadata."""
    mpath, bpath = _paths(path)
    mpath.parent.mkdir(parents=True, exist_ok=True)
    offset = 0
    index = []
    blobs = []
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f4").reshape(-1)
        index.append({"name": name, "offset": offset, "count": int(a.size)})
        offset += a.size
        blobs.append(a.tobytes())
    data = b"".join(blobs)
    doc = {"format": FORMAT, **meta, "arrays": index, "sha256": hashlib.sha256(data).hexdigest()}
    bpath.write_bytes(data)
    mpath.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return mpath


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    mpath, bpath = _paths(path)
    doc = json.loads(mpath.read_text())
    if doc.get("format") != FORMAT:
        raise ValueError(f"{mpath}: not a {FORMAT} manifest")
    data = bpath.read_bytes()
    if hashlib.sha256(data).hexdigest() != doc["sha256"]:
        raise ValueError(f"{bpath}: checksum mismatch")
    flat = np.frombuffer(data, dtype="<f4")
    arrays = {e["name"]: flat[e["offset"] : e["offset"] + e["count"]].astype(np.float32) for e in doc["arrays"]}
    meta = {k: v for k, v in doc.items() if k not in ("arrays", "sha256", "format")}
    return arrays, meta
