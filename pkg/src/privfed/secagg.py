"""Pairwise-mask secure aggregation over a power-of-two integer ring.

Each enrolled pair of devices (i, j) shares a 32-byte seed fixed at
initialization. At round t, device i masks its fixed-point-encoded model with

    mask_i = sum over j in selected set, j != i, of (r_ij - r_ji)  mod M

where r_ij = PRF(seed_ij || direction, t) is a length-d vector both endpoints
can derive locally. Summed over the selected set the masks telescope to zero,
so the server recovers exactly the modular sum of the plaintexts and nothing
else. There is no interaction after setup and no dropout recovery: a device
that goes silent mid-round is a protocol error.

PRF construction (fixed, bit-exact across platforms): coordinate k of
r_ij is the first 8 bytes, little-endian, of
SHA-256(seed || LE64(t) || LE64(k)), reduced mod M, with a single direction
byte (0 if the deriving endpoint has the smaller id, else 1) appended to the
shared seed so r_ij != r_ji.

Seed setup here is an in-memory trusted exchange driven by one master seed;
key agreement proper is out of scope.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping, MutableMapping, Sequence

import numpy as np

from ._sha256 import digests_first8_le
from .errors import ProtocolError

__all__ = [
    "SeedTable",
    "FixedPointCodec",
    "MaskedVector",
    "init_seeds",
    "prf_stream",
    "compute_mask",
    "encrypt",
    "aggregate",
]

# Ring moduli are kept at or below 2^63 so a+b and a+(M-b) of reduced values
# never overflow uint64.
_MAX_MODULUS = 1 << 63


def _check_modulus(modulus: int) -> np.uint64:
    if not 2 <= modulus <= _MAX_MODULUS:
        raise ValueError(f"modulus must be in [2, 2^63], got {modulus}")
    return np.uint64(modulus)


def _mod_add(a: np.ndarray, b: np.ndarray, m: np.uint64) -> np.ndarray:
    return (a + b) % m


def _mod_sub(a: np.ndarray, b: np.ndarray, m: np.uint64) -> np.ndarray:
    return (a + (m - b)) % m


class SeedTable:
    """Symmetric table of per-pair 32-byte seeds; diagonal unused."""

    def __init__(self, n: int, pair_seeds: Mapping[tuple[int, int], bytes]):
        self.n = n
        self._seeds = dict(pair_seeds)

    def seed(self, i: int, j: int) -> bytes:
        if i == j:
            raise ValueError("no seed on the diagonal")
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise ValueError(f"device ids must be in [0, {self.n})")
        return self._seeds[(min(i, j), max(i, j))]


def init_seeds(n: int, master_seed: bytes) -> SeedTable:
    """Deterministic trusted setup: one shared seed per unordered pair."""
    if n < 2:
        raise ValueError("need at least 2 devices")
    if len(master_seed) != 32:
        raise ValueError("master_seed must be 32 bytes")
    seeds = {}
    for i in range(n):
        for j in range(i + 1, n):
            h = hashlib.sha256()
            h.update(b"privfed.pairseed")
            h.update(master_seed)
            h.update(i.to_bytes(8, "little"))
            h.update(j.to_bytes(8, "little"))
            seeds[(i, j)] = h.digest()
    return SeedTable(n, seeds)


def prf_stream(seed: bytes, t: int, d: int, modulus: int) -> np.ndarray:
    """Deterministic pseudorandom vector of d values mod ``modulus``.

    Coordinate k = first 8 bytes (little-endian) of
    SHA-256(seed || LE64(t) || LE64(k)), mod ``modulus``.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if t < 0:
        raise ValueError("t must be >= 0")
    m = _check_modulus(modulus)
    raw = digests_first8_le(seed + t.to_bytes(8, "little"), d)
    return raw % m


def _directional_seed(table: SeedTable, src: int, dst: int) -> bytes:
    # r_{src,dst}: shared pair seed plus one direction byte.
    direction = 0 if src < dst else 1
    return table.seed(src, dst) + bytes([direction])


def compute_mask(
    i: int,
    selected: Iterable[int],
    t: int,
    seeds: SeedTable,
    d: int,
    modulus: int,
    stream_cache: MutableMapping[tuple[int, int, int], np.ndarray] | None = None,
) -> np.ndarray:
    """Device i's round-t mask over the selected set.

    Masks of all selected devices sum to zero mod M. ``stream_cache`` may be
    shared by the devices of one round to avoid recomputing each pair stream
    twice; keys are (min_id, max_id, direction).
    """
    omega = set(selected)
    if i not in omega:
        raise ValueError(f"device {i} is not in the selected set")
    m = _check_modulus(modulus)

    def stream(src: int, dst: int) -> np.ndarray:
        key = (min(src, dst), max(src, dst), 0 if src < dst else 1)
        if stream_cache is not None and key in stream_cache:
            return stream_cache[key]
        value = prf_stream(_directional_seed(seeds, src, dst), t, d, modulus)
        if stream_cache is not None:
            stream_cache[key] = value
        return value

    mask = np.zeros(d, dtype=np.uint64)
    for j in sorted(omega - {i}):
        mask = _mod_add(mask, _mod_sub(stream(i, j), stream(j, i), m), m)
    return mask


@dataclass(frozen=True)
class MaskedVector:
    """Ciphertext of one encoded local model for round ``round_index``."""

    round_index: int
    values: np.ndarray  # uint64, every entry in [0, modulus)

    def to_bytes(self) -> bytes:
        """Wire layout: entries as consecutive little-endian 8-byte words."""
        return self.values.astype("<u8").tobytes()

    @classmethod
    def from_bytes(cls, round_index: int, raw: bytes) -> "MaskedVector":
        if len(raw) % 8 != 0:
            raise ValueError("ciphertext length must be a multiple of 8 bytes")
        return cls(round_index, np.frombuffer(raw, dtype="<u8").astype(np.uint64))


@dataclass
class FixedPointCodec:
    """Signed fixed-point encoding into the ring [0, modulus).

    scale = 2^frac_bits; x is encoded as round(x*scale) mod modulus with
    negatives wrapped. ``modulus`` must be a power of two exceeding
    2 * max_summands * scale * clip_range so that a sum of up to
    ``max_summands`` encoded vectors cannot wrap. Inputs beyond
    ``clip_range`` in magnitude are saturated and counted, never wrapped.
    """

    frac_bits: int = 16
    modulus: int = 1 << 63
    clip_range: float = float(1 << 20)
    max_summands: int = 16
    saturation_count: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.frac_bits < 1:
            raise ValueError("frac_bits must be >= 1")
        if self.clip_range <= 0:
            raise ValueError("clip_range must be > 0")
        if self.max_summands < 1:
            raise ValueError("max_summands must be >= 1")
        _check_modulus(self.modulus)
        if self.modulus & (self.modulus - 1) != 0:
            raise ValueError("modulus must be a power of two")
        if self.modulus <= 2 * self.max_summands * self.scale * self.clip_range:
            raise ValueError(
                "modulus too small: need M > 2*r*scale*clip_range to rule out "
                "wraparound when summing"
            )

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    def encode(self, x: np.ndarray) -> np.ndarray:
        """Quantize a real vector into the ring; per-coordinate error <= 1/(2*scale)."""
        x = np.asarray(x, dtype=np.float64)
        saturated = int(np.count_nonzero(np.abs(x) > self.clip_range))
        if saturated:
            self.saturation_count += saturated
            x = np.clip(x, -self.clip_range, self.clip_range)
        q = np.rint(x * self.scale).astype(np.int64)
        # cast wraps negatives mod 2^64; masking keeps that exact because the
        # power-of-two modulus divides 2^64
        return q.astype(np.uint64) & np.uint64(self.modulus - 1)

    def decode_sum(self, total: np.ndarray, count: int) -> np.ndarray:
        """Decode a modular sum of <= max_summands encodings into their average."""
        if count < 1:
            raise ValueError("count must be >= 1")
        if count > self.max_summands:
            raise ValueError("count exceeds the codec's max_summands bound")
        total = np.asarray(total, dtype=np.uint64)
        half = np.uint64(self.modulus // 2)
        signed = np.where(
            total <= half,
            total.astype(np.int64),
            -((np.uint64(self.modulus) - total).astype(np.int64)),
        )
        return signed.astype(np.float64) / (self.scale * count)


def encrypt(encoded: np.ndarray, mask: np.ndarray, modulus: int, round_index: int = 0) -> MaskedVector:
    """Entrywise modular addition of plaintext and mask."""
    m = _check_modulus(modulus)
    encoded = np.asarray(encoded, dtype=np.uint64)
    mask = np.asarray(mask, dtype=np.uint64)
    if encoded.shape != mask.shape:
        raise ProtocolError(
            f"plaintext/mask dimension mismatch: {encoded.shape} vs {mask.shape}"
        )
    return MaskedVector(round_index, _mod_add(encoded, mask, m))


def aggregate(ciphers: Sequence[MaskedVector], modulus: int) -> np.ndarray:
    """Entrywise modular sum of same-round ciphertexts."""
    if not ciphers:
        raise ProtocolError("nothing to aggregate")
    m = _check_modulus(modulus)
    rounds = {c.round_index for c in ciphers}
    if len(rounds) != 1:
        raise ProtocolError(f"ciphertexts from mixed rounds: {sorted(rounds)}")
    dims = {c.values.shape for c in ciphers}
    if len(dims) != 1:
        raise ProtocolError(f"ciphertext dimension mismatch: {sorted(dims)}")
    total = np.zeros_like(ciphers[0].values)
    for c in ciphers:
        total = _mod_add(total, c.values, m)
    return total
