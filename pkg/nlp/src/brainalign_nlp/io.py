"""Feature-matrix interchange writer (BAFM wire format).

Layout: magic "BAFM" (4 bytes), version u32 LE, dtype u8 (0=f32, 1=f64),
n_rows u64 LE, n_cols u64 LE, then the row-major little-endian payload.
A JSON sidecar ``<stem>.meta.json`` carries alignment and provenance.
This is the write side of the alignment engine's format; compatibility
is pinned by reading the files back with that engine in the tests.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import NlpConfigError

_HEADER = struct.Struct("<4sIBQQ")
_MAGIC = b"BAFM"
_VERSION = 1
_DTYPE_FLAGS = {np.dtype("float32"): 0, np.dtype("float64"): 1}


def sidecar_path(path: Path | str) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def write_feature_matrix(values: np.ndarray, path: Path | str, *,
                         model_name: str, layer: int, context_length: int,
                         dataset_id: str, alignment: str = "word",
                         extra: dict | None = None) -> None:
    values = np.ascontiguousarray(values)
    if values.ndim != 2:
        raise NlpConfigError(f"feature matrix must be 2-D, got {values.shape}")
    if values.dtype not in _DTYPE_FLAGS:
        values = values.astype(np.float32)
    if not np.isfinite(values).all():
        raise NlpConfigError("feature matrix contains NaN or Inf")
    path = Path(path)
    header = _HEADER.pack(_MAGIC, _VERSION, _DTYPE_FLAGS[values.dtype],
                          values.shape[0], values.shape[1])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.astype(values.dtype.newbyteorder("<")).tobytes())
    meta = {
        "alignment": alignment,
        "model_name": model_name,
        "layer": int(layer),
        "context_length": int(context_length),
        "dataset_id": dataset_id,
    }
    meta.update(extra or {})
    sidecar_path(path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
