"""File output helpers: float WAV, exact-round-trip CSV, canonical JSON."""

from __future__ import annotations

import hashlib
import json

import numpy as np
from scipy.io import wavfile


def write_wav(path, data: np.ndarray, sample_rate: float):
    """IEEE float32 WAV; data is (n,) or (n, channels)."""
    wavfile.write(path, int(round(sample_rate)), np.asarray(data, dtype=np.float32))


def read_wav(path):
    """Returns (sample_rate, float64 data)."""
    rate, data = wavfile.read(path)
    return float(rate), np.asarray(data, dtype=np.float64)


def write_matrix_csv(path, array: np.ndarray, header: str = ""):
    """CSV with full float64 precision (%.17e survives a round trip)."""
    np.savetxt(path, np.atleast_2d(np.asarray(array, dtype=np.float64)),
               fmt="%.17e", delimiter=",", header=header, comments="# ")


def read_matrix_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", comments="#"))


def canonical_json(obj) -> str:
    """Stable serialisation: sorted keys, no whitespace drift."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_hash(obj) -> str:
    """Hex digest identifying a fully resolved configuration."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]
