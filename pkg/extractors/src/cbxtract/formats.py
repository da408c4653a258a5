"""Standalone writers for the coreset toolkit's on-disk formats.

Implemented against the published byte layouts rather than the core
library, so this package has no dependency on it:

* ``CBE1``: magic | u32 version=1 | u64 rows | u64 cols | u8 normalized,
  then rows*cols little-endian float32, row-major.
* ``CBL1``: magic | u32 version=1 | u64 n | u32 num_classes, then n u32.

All writes go through a temp-file-then-rename so partially written
artifacts are never observable.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

EMB_HEADER = struct.Struct("<4sIQQB")
LAB_HEADER = struct.Struct("<4sIQI")
VERSION = 1


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_cbe(path, matrix: np.ndarray, normalized: bool) -> None:
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise ValueError(f"embedding matrix must be 2-D, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError("refusing to write non-finite embeddings")
    header = EMB_HEADER.pack(b"CBE1", VERSION, m.shape[0], m.shape[1], 1 if normalized else 0)
    atomic_write_bytes(path, header + m.tobytes())


def write_cbl(path, labels, num_classes: int) -> None:
    arr = np.ascontiguousarray(labels, dtype="<u4")
    if arr.size and int(arr.max()) >= num_classes:
        raise ValueError(f"label {int(arr.max())} out of range for {num_classes} classes")
    header = LAB_HEADER.pack(b"CBL1", VERSION, arr.size, num_classes)
    atomic_write_bytes(path, header + arr.tobytes())


def write_catalog(path, catalog: dict) -> None:
    atomic_write_text(path, json.dumps(catalog, indent=2, ensure_ascii=False, sort_keys=True) + "\n")


def write_name_list(path, names) -> None:
    atomic_write_text(path, json.dumps(list(names), ensure_ascii=False, indent=0) + "\n")


def l2_normalize(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot L2-normalize a zero embedding row")
    return rows / norms
