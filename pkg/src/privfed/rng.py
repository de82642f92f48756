"""Domain-separated random streams derived from one master seed.

Every source of randomness in a run (device selection, per-device shuffling,
per-device noise, protocol seeds, model init) gets its own stream derived by
hashing the master seed together with a label path. Streams are independent
of each other and of call order, so a run is reproducible bit-for-bit from
its master seed alone.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_bytes(master_seed: int, *labels: object, n: int = 32) -> bytes:
    """Hash (master_seed, labels) into ``n`` bytes (n <= 32)."""
    if not 1 <= n <= 32:
        raise ValueError("n must be in [1, 32]")
    h = hashlib.sha256()
    h.update(b"privfed.rng")
    h.update(struct.pack("<Q", master_seed & _MASK64))
    for label in labels:
        part = str(label).encode("utf-8")
        h.update(struct.pack("<Q", len(part)))
        h.update(part)
    return h.digest()[:n]


def derive_rng(master_seed: int, *labels: object) -> np.random.Generator:
    """Independent numpy Generator for the given label path."""
    entropy = int.from_bytes(derive_bytes(master_seed, *labels), "little")
    return np.random.default_rng(entropy)
