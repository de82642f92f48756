"""Batched single-block SHA-256 for the mask PRF.

Mask generation needs one SHA-256 per vector coordinate; model-sized vectors
make that millions of hashes per round, which is too slow through hashlib
call-by-call. All PRF messages here are (seed || LE64(t) || LE64(k)) with a
fixed seed/t prefix and k = 0..d-1, i.e. same-length single-block messages
that differ only in the trailing counter, so they compress well in a tiled
numba kernel that LLVM can vectorize across lanes.

``digests_first8_le`` is the accelerated entry point; ``_reference`` computes
the same values through hashlib and is the ground truth the kernel is tested
against bit-for-bit. If numba is unavailable the reference path is used.
"""

from __future__ import annotations

import hashlib

import numpy as np

_ROUND_CONSTANTS = np.array([
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
], dtype=np.uint32)

_TILE = 256


_COUNTER_LAYOUT_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _counter_layout(prefix_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Word indices and in-word shifts of the 8 counter bytes."""
    cached = _COUNTER_LAYOUT_CACHE.get(prefix_len)
    if cached is None:
        positions = np.arange(prefix_len, prefix_len + 8)
        cached = (positions // 4, (8 * (3 - positions % 4)).astype(np.int64))
        _COUNTER_LAYOUT_CACHE[prefix_len] = cached
    return cached


def _build_template(prefix: bytes) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Padded one-block message as 16 big-endian words, with the positions of
    the 8 counter bytes (word index and in-word shift) left for the kernel."""
    msg_len = len(prefix) + 8
    if msg_len > 55:
        raise ValueError("prefix too long for a single SHA-256 block")
    block = bytearray(64)
    block[: len(prefix)] = prefix
    block[msg_len] = 0x80
    block[56:64] = (msg_len * 8).to_bytes(8, "big")
    words = np.frombuffer(bytes(block), dtype=">u4").astype(np.uint32)
    word_idx, shifts = _counter_layout(len(prefix))
    return words, word_idx, shifts


def _reference(prefix: bytes, count: int) -> np.ndarray:
    """hashlib ground truth: first 8 digest bytes, little-endian, per counter."""
    out = np.empty(count, dtype=np.uint64)
    for k in range(count):
        digest = hashlib.sha256(prefix + k.to_bytes(8, "little")).digest()
        out[k] = int.from_bytes(digest[:8], "little")
    return out


def _make_kernel():
    from numba import njit, uint32, uint64

    rc = _ROUND_CONSTANTS

    @njit(cache=True)
    def kernel(template, word_idx, shifts, count, out):  # pragma: no cover
        w = np.empty((64, _TILE), dtype=np.uint32)
        state = np.empty((8, _TILE), dtype=np.uint32)
        for start in range(0, count, _TILE):
            lanes = min(_TILE, count - start)
            for j in range(16):
                tj = template[j]
                for l in range(lanes):
                    w[j, l] = tj
            for b in range(8):
                wi = word_idx[b]
                sh = shifts[b]
                for l in range(lanes):
                    kb = (uint64(start + l) >> uint64(8 * b)) & uint64(0xFF)
                    w[wi, l] |= uint32(kb) << uint32(sh)
            for j in range(16, 64):
                for l in range(lanes):
                    x = w[j - 15, l]
                    y = w[j - 2, l]
                    s0 = ((x >> 7) | (x << 25)) ^ ((x >> 18) | (x << 14)) ^ (x >> 3)
                    s1 = ((y >> 17) | (y << 15)) ^ ((y >> 19) | (y << 13)) ^ (y >> 10)
                    w[j, l] = w[j - 16, l] + s0 + w[j - 7, l] + s1
            for l in range(lanes):
                state[0, l] = uint32(0x6a09e667)
                state[1, l] = uint32(0xbb67ae85)
                state[2, l] = uint32(0x3c6ef372)
                state[3, l] = uint32(0xa54ff53a)
                state[4, l] = uint32(0x510e527f)
                state[5, l] = uint32(0x9b05688c)
                state[6, l] = uint32(0x1f83d9ab)
                state[7, l] = uint32(0x5be0cd19)
            for j in range(64):
                kj = rc[j]
                for l in range(lanes):
                    a = state[0, l]; b2 = state[1, l]; c = state[2, l]; d = state[3, l]
                    e = state[4, l]; f = state[5, l]; g = state[6, l]; h = state[7, l]
                    big_s1 = ((e >> 6) | (e << 26)) ^ ((e >> 11) | (e << 21)) ^ ((e >> 25) | (e << 7))
                    ch = (e & f) ^ ((~e) & g)
                    t1 = h + big_s1 + ch + kj + w[j, l]
                    big_s0 = ((a >> 2) | (a << 30)) ^ ((a >> 13) | (a << 19)) ^ ((a >> 22) | (a << 10))
                    maj = (a & b2) ^ (a & c) ^ (b2 & c)
                    t2 = big_s0 + maj
                    state[7, l] = g; state[6, l] = f; state[5, l] = e; state[4, l] = d + t1
                    state[3, l] = c; state[2, l] = b2; state[1, l] = a; state[0, l] = t1 + t2
            for l in range(lanes):
                h0 = (uint64(0x6a09e667) + uint64(state[0, l])) & uint64(0xFFFFFFFF)
                h1 = (uint64(0xbb67ae85) + uint64(state[1, l])) & uint64(0xFFFFFFFF)
                # digest starts with h0, h1 big-endian; reinterpret little-endian
                h0s = ((h0 & uint64(0xFF)) << uint64(24)) | ((h0 & uint64(0xFF00)) << uint64(8)) \
                    | ((h0 >> uint64(8)) & uint64(0xFF00)) | (h0 >> uint64(24))
                h1s = ((h1 & uint64(0xFF)) << uint64(24)) | ((h1 & uint64(0xFF00)) << uint64(8)) \
                    | ((h1 >> uint64(8)) & uint64(0xFF00)) | (h1 >> uint64(24))
                out[start + l] = h0s | (h1s << uint64(32))

    return kernel


try:
    _kernel = _make_kernel()
except ImportError:  # numba not installed; hashlib path only
    _kernel = None

HAVE_FAST_KERNEL = _kernel is not None


def digests_first8_le(prefix: bytes, count: int) -> np.ndarray:
    """First 8 bytes (little-endian uint64) of SHA-256(prefix || LE64(k))
    for k = 0..count-1."""
    if count < 0:
        raise ValueError("count must be >= 0")
    if _kernel is None:
        return _reference(prefix, count)
    template, word_idx, shifts = _build_template(prefix)
    out = np.empty(count, dtype=np.uint64)
    _kernel(template, word_idx, shifts, count, out)
    return out
