import datetime
import hashlib
import json
import os
from typing import Dict, Optional

import numpy as np


def log_dir() -> str:
    """Directory of training logs written without an explicit output directory: ``$LOG_DIR`` or ``./logs``."""
    return os.environ.get("LOG_DIR", "./logs")


def create_timestamp_path(directory: str) -> str:
    """Path prefix inside ``directory`` named after the current time, e.g. ``logs/20240101-120000``."""
    return os.path.join(directory, datetime.datetime.now().strftime("%Y%m%d-%H%M%S"))


def resolve_dtype(precision: str) -> np.dtype:
    """Maps a precision tag ("f32" or "f64") to a numpy dtype."""
    if precision == "f32":
        return np.dtype(np.float32)
    if precision == "f64":
        return np.dtype(np.float64)
    raise ValueError(f"Precision must be 'f32' or 'f64' but got {precision!r}")


def array_digest(array: np.ndarray) -> str:
    """SHA-256 over the little-endian bytes of an array."""
    array = np.ascontiguousarray(array)
    if array.dtype.byteorder == ">":
        array = array.astype(array.dtype.newbyteorder("<"))
    return hashlib.sha256(array.tobytes()).hexdigest()


def canonical_json(data) -> str:
    """Key-sorted compact JSON, stable across a write and read round trip."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def combine_digests(digests: Dict[str, str], metadata: Optional[dict] = None) -> str:
    """Checksum over named hex digests and canonical metadata.

    Names are hashed with their digests, so renaming or swapping two arrays changes the checksum.
    """
    sha = hashlib.sha256()
    for name in sorted(digests):
        sha.update(f"{name}={digests[name]};".encode("utf-8"))
    sha.update(canonical_json(metadata or {}).encode("utf-8"))
    return sha.hexdigest()
