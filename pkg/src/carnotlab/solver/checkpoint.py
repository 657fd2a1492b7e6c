"""COSV1 checkpoints: ``b"COSV1\\n"``, one JSON metadata line, raw little-endian float64 values."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..metrics import Box
from .grid import Grid, GridFunction

MAGIC = b"COSV1\n"


def _meta(u: GridFunction) -> dict:
    g = u.grid
    return {
        "box": {"lower": list(g.box.lower), "upper": list(g.box.upper), "t0": g.box.t0, "t1": g.box.t1},
        "dtype": "<f8",
        "nt": g.nt,
        "nx": list(g.nx),
        "order": "C",
        "shape": list(g.shape),
        "version": 1,
    }


def save_checkpoint(u: GridFunction, path) -> None:
    meta = json.dumps(_meta(u), sort_keys=True, separators=(",", ":")).encode()
    data = np.ascontiguousarray(u.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(meta + b"\n")
        fh.write(data)


def load_checkpoint(path) -> GridFunction:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError(f"{path}: not a COSV1 checkpoint")
    end = raw.index(b"\n", len(MAGIC))
    meta = json.loads(raw[len(MAGIC):end])
    if meta.get("version") != 1 or meta.get("dtype") != "<f8":
        raise ValueError(f"{path}: unsupported checkpoint metadata {meta}")
    b = meta["box"]
    grid = Grid(Box(tuple(b["lower"]), tuple(b["upper"]), b["t0"], b["t1"]), tuple(meta["nx"]), meta["nt"])
    body = raw[end + 1:]
    expected = int(np.prod(meta["shape"])) * 8
    if len(body) != expected:
        raise ValueError(f"{path}: expected {expected} value bytes, found {len(body)}")
    vals = np.frombuffer(body, dtype="<f8").reshape(meta["shape"]).astype(float)
    return GridFunction(grid, vals)
