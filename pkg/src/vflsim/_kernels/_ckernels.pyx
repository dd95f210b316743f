# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled quantizer kernels; see ``_fallback`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def bucketize(values, double lo, double width, Py_ssize_t n):
    cdef const double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t m = v.shape[0]
    codes_arr = np.empty(m, dtype=np.uint32)
    sums_arr = np.zeros(n, dtype=np.float64)
    counts_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.uint32_t[::1] codes = codes_arr
    cdef double[::1] sums = sums_arr
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef Py_ssize_t i
    cdef double q
    cdef long long k
    for i in range(m):
        q = floor((v[i] - lo) / width)
        if q < 0:
            k = 0
        elif q >= n:
            k = n - 1
        else:
            k = <long long>q
        codes[i] = <cnp.uint32_t>k
        sums[k] += v[i]
        counts[k] += 1
    return codes_arr, sums_arr, counts_arr


def pack_codes(codes, int bits):
    cdef const cnp.uint32_t[::1] c = np.ascontiguousarray(codes, dtype=np.uint32)
    cdef Py_ssize_t m = c.shape[0]
    if bits == 0 or m == 0:
        return b""
    cdef Py_ssize_t nbytes = (m * bits + 7) // 8
    out_arr = np.zeros(nbytes, dtype=np.uint8)
    cdef cnp.uint8_t[::1] out = out_arr
    cdef Py_ssize_t i, o = 0
    cdef cnp.uint64_t acc = 0
    cdef cnp.uint64_t mask = ((<cnp.uint64_t>1) << bits) - 1
    cdef int filled = 0
    # bit accumulator: append each code above the pending bits, flush whole bytes
    for i in range(m):
        acc |= (<cnp.uint64_t>c[i] & mask) << filled
        filled += bits
        while filled >= 8:
            out[o] = <cnp.uint8_t>(acc & 0xFF)
            o += 1
            acc >>= 8
            filled -= 8
    if filled:
        out[o] = <cnp.uint8_t>(acc & 0xFF)
    return out_arr.tobytes()


def unpack_codes(buf, Py_ssize_t count, int bits):
    out_arr = np.zeros(count, dtype=np.uint32)
    if bits == 0 or count == 0:
        return out_arr
    cdef const cnp.uint8_t[::1] raw = np.frombuffer(buf, dtype=np.uint8)
    if raw.shape[0] < (count * bits + 7) // 8:
        raise ValueError(f"{raw.shape[0]} bytes cannot hold {count} codes of {bits} bits")
    cdef cnp.uint32_t[::1] out = out_arr
    cdef Py_ssize_t i, p = 0
    cdef cnp.uint64_t acc = 0
    cdef cnp.uint64_t mask = ((<cnp.uint64_t>1) << bits) - 1
    cdef int filled = 0
    for i in range(count):
        while filled < bits:
            acc |= (<cnp.uint64_t>raw[p]) << filled
            p += 1
            filled += 8
        out[i] = <cnp.uint32_t>(acc & mask)
        acc >>= bits
        filled -= bits
    return out_arr
