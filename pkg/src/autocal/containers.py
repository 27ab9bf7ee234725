"""On-disk matrix container: raw float64 blob plus a JSON sidecar.

Layout is row-major little-endian 64-bit floats in ``<name>.f64`` with the
shape recorded in ``<name>.json``. The format is language-neutral and
bit-exact, which keeps reruns byte-identical.
"""

import json
import os

import numpy as np

_DTYPE = np.dtype("<f8")


def _paths(base):
    base = str(base)
    if base.endswith(".f64") or base.endswith(".json"):
        base = os.path.splitext(base)[0]
    return base + ".f64", base + ".json"


def save_matrix(base, values):
    """Write a 2-d array as ``<base>.f64`` + ``<base>.json``."""
    arr = np.ascontiguousarray(np.asarray(values, dtype=float))
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {arr.shape}")
    blob_path, sidecar_path = _paths(base)
    with open(blob_path, "wb") as fh:
        fh.write(arr.astype(_DTYPE).tobytes(order="C"))
    sidecar = {
        "rows": int(arr.shape[0]),
        "cols": int(arr.shape[1]),
        "order": "row-major",
        "endianness": "little",
    }
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")


def load_matrix(base):
    """Read a matrix written by :func:`save_matrix`."""
    blob_path, sidecar_path = _paths(base)
    with open(sidecar_path, encoding="utf-8") as fh:
        sidecar = json.load(fh)
    if sidecar.get("order") != "row-major" or sidecar.get("endianness") != "little":
        raise ValueError(f"unsupported container layout in {sidecar_path}")
    rows, cols = int(sidecar["rows"]), int(sidecar["cols"])
    with open(blob_path, "rb") as fh:
        raw = fh.read()
    expected = rows * cols * _DTYPE.itemsize
    if len(raw) != expected:
        raise ValueError(f"{blob_path}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype=_DTYPE).reshape(rows, cols).astype(float)


def save_vector(base, values):
    """Store a 1-d array as a single-row matrix."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d array, got shape {arr.shape}")
    save_matrix(base, arr[None, :])


def load_vector(base):
    mat = load_matrix(base)
    if mat.shape[0] != 1:
        raise ValueError(f"expected a single-row container, got {mat.shape[0]} rows")
    return mat[0]
