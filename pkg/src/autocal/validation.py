"""Input validation helpers used at API boundaries."""

import hashlib

import numpy as np


def as_1d(x, name, length=None, dtype=float):
    """Coerce to a 1-d float array, checking length when given."""
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {arr.shape[0]}")
    return arr


def as_2d(x, name, cols=None, dtype=float):
    """Coerce to a 2-d float array, checking column count when given."""
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if cols is not None and arr.shape[1] != cols:
        raise ValueError(f"{name} must have {cols} columns, got {arr.shape[1]}")
    return arr


def require_finite(arr, name):
    """Raise if any entry is NaN or infinite."""
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def require_positive(arr, name):
    """Raise if any entry is not strictly positive."""
    arr = np.asarray(arr, dtype=float)
    if np.any(arr <= 0.0):
        raise ValueError(f"{name} must be strictly positive")
    return arr


def derive_seed(master, label):
    """Derive a stage seed deterministically from a master seed and a label.

    Stable across platforms and runs: the label is hashed with SHA-256 and
    mixed with the master seed into a 64-bit integer.
    """
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    tag = int.from_bytes(digest[:8], "little")
    return (int(master) * 0x9E3779B97F4A7C15 + tag) % (1 << 63)
