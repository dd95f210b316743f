"""Numpy implementations of the quantizer kernels.

These define the reference semantics; the compiled module must agree with
them bit for bit.
"""

from __future__ import annotations

import numpy as np


def bucketize(values: np.ndarray, lo: float, width: float, n: int):
    """Assign each value to one of ``n`` half-open buckets of ``width`` from ``lo``.

    The last bucket is closed. Returns ``(codes, sums, counts)``.
    """
    v = np.ascontiguousarray(values, dtype=np.float64)
    codes = np.floor((v - lo) / width).astype(np.int64)
    np.clip(codes, 0, n - 1, out=codes)
    sums = np.bincount(codes, weights=v, minlength=n).astype(np.float64)
    counts = np.bincount(codes, minlength=n).astype(np.int64)
    return codes.astype(np.uint32), sums, counts


def pack_codes(codes: np.ndarray, bits: int) -> bytes:
    """Pack ``bits``-wide unsigned codes LSB-first into a byte string."""
    codes = np.asarray(codes, dtype=np.uint32)
    if bits == 0 or codes.size == 0:
        return b""
    shifts = np.arange(bits, dtype=np.uint32)
    bit_matrix = ((codes[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bit_matrix.reshape(-1), bitorder="little").tobytes()


def unpack_codes(buf: bytes, count: int, bits: int) -> np.ndarray:
    if bits == 0 or count == 0:
        return np.zeros(count, dtype=np.uint32)
    raw = np.frombuffer(buf, dtype=np.uint8)
    if raw.size < (count * bits + 7) // 8:
        raise ValueError(f"{raw.size} bytes cannot hold {count} codes of {bits} bits")
    flat = np.unpackbits(raw, bitorder="little")[: count * bits]
    weights = (np.uint32(1) << np.arange(bits, dtype=np.uint32))
    return (flat.reshape(count, bits).astype(np.uint32) * weights).sum(axis=1, dtype=np.uint32)
