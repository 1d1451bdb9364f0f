"""Stable seed derivation.

Every random stream in the pipeline is keyed off a master seed plus a label,
hashed with SHA-256 so the mapping is identical across processes and Python
versions (the builtin ``hash`` is salted per process).
"""

from __future__ import annotations

import hashlib
from typing import Iterable

import numpy as np

SEED_BITS = 32


def derive_seed(master: int, *labels: object) -> int:
    """Return a 32-bit seed determined by ``master`` and ``labels``."""
    h = hashlib.sha256(str(int(master)).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "big") % (1 << SEED_BITS)


def content_seed(seed: int, parts: Iterable[object], arrays: Iterable[np.ndarray] = ()) -> int:
    """Seed derived from ``seed``, string-able ``parts`` and raw array bytes."""
    h = hashlib.sha256(str(int(seed)).encode())
    for p in parts:
        h.update(b"\x1f")
        h.update(str(p).encode())
    for a in arrays:
        h.update(b"\x1e")
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return int.from_bytes(h.digest()[:8], "big") % (1 << SEED_BITS)


def rng_for(master: int, *labels: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *labels))
