"""Flat parameter archive.

Layout (all text UTF-8, values little-endian float64)::

    KAREADER-CKPT 1
    meta <one-line JSON object>
    param <name> <shape as d0xd1x..., or "scalar">
    ...
    end
    <raw float64 values of each param, row-major, in header order>

The header is readable with ``head``; the payload size is implied by the shapes.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = "KAREADER-CKPT 1"


class CheckpointError(ValueError):
    pass


def _shape_str(shape: tuple[int, ...]) -> str:
    return "x".join(str(n) for n in shape) if shape else "scalar"


def _parse_shape(text: str) -> tuple[int, ...]:
    return () if text == "scalar" else tuple(int(n) for n in text.split("x"))


def save_checkpoint(path, params: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    header = [MAGIC, "meta " + json.dumps(meta or {}, sort_keys=True)]
    for name, arr in params.items():
        if any(c.isspace() for c in name):
            raise CheckpointError(f"parameter name {name!r} contains whitespace")
        header.append(f"param {name} {_shape_str(np.shape(arr))}")
    header.append("end")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("utf-8"))
        for arr in params.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.readline().decode("utf-8").rstrip("\n")
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (header {magic!r})")
        meta_line = fh.readline().decode("utf-8").rstrip("\n")
        if not meta_line.startswith("meta "):
            raise CheckpointError(f"{path}: missing meta line")
        meta = json.loads(meta_line[5:])
        entries = []
        while True:
            line = fh.readline().decode("utf-8").rstrip("\n")
            if line == "end":
                break
            if not line:
                raise CheckpointError(f"{path}: truncated header")
            kind, name, shape = line.split(" ")
            if kind != "param":
                raise CheckpointError(f"{path}: unexpected header line {line!r}")
            entries.append((name, _parse_shape(shape)))
        params = {}
        for name, shape in entries:
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise CheckpointError(f"{path}: payload truncated at {name}")
            params[name] = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes after payload")
    return params, meta
