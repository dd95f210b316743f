"""Uniform bucket quantization of forward outputs and backward surrogates.

A message quantizes one flat block of values into ``N`` equal-width buckets
spanning ``[min, max]``; each value is replaced by the mean of the values
that landed in its bucket. Values are carried as 32-bit floats, so encoding
starts by rounding the input to float32.

Wire layout (little-endian)::

    u32 count | u32 n_buckets | f32 min | f32 max
    f32 bucket_means[n_buckets]
    packed codes, ceil(log2 n_buckets) bits each, LSB-first

Three gradient surrogates stand in for the quantizer during backprop:
``addition`` (straight-through), ``multiply`` (scale by dequant/original) and
``upper_bound`` (derivative of ``log(a*o + b) + c`` fitted to the quantizer's
breakpoints).
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass

import numpy as np

from ._kernels import bucketize, pack_codes, unpack_codes
from .errors import ConfigError, CorruptionError, EmptyInputError, NumericError

HEADER = struct.Struct("<IIff")
MULTIPLY_ZERO_TOL = 1e-8
FIT_ITERATIONS = 50
FIT_TOL = 1e-10


def code_bits(n_buckets: int) -> int:
    """Bits per code: ``ceil(log2(n_buckets))``."""
    return (int(n_buckets) - 1).bit_length()


@dataclass(frozen=True, eq=False)
class QuantizedMessage:
    count: int
    n_buckets: int
    min: float
    max: float
    bucket_means: np.ndarray  # float32[n_buckets]
    codes: np.ndarray  # uint32[count]

    @property
    def bits(self) -> int:
        return code_bits(self.n_buckets)

    @property
    def width(self) -> float:
        return (float(self.max) - float(self.min)) / self.n_buckets

    def breakpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Each bucket's two edges paired with its mean: ``2N`` points of the step function."""
        lo, w = float(self.min), self.width
        edges = lo + w * np.arange(self.n_buckets + 1, dtype=np.float64)
        edges[-1] = float(self.max)
        means = self.bucket_means.astype(np.float64)
        xs = np.stack([edges[:-1], edges[1:]], axis=1).reshape(-1)
        ys = np.repeat(means, 2)
        return xs, ys


def quantize(o, n_buckets: int) -> QuantizedMessage:
    if int(n_buckets) != n_buckets or n_buckets < 2:
        raise ConfigError(f"n_buckets must be an integer >= 2, got {n_buckets}")
    n_buckets = int(n_buckets)
    flat = np.asarray(o, dtype=np.float64).reshape(-1)
    if flat.size == 0:
        raise EmptyInputError("cannot quantize an empty vector")
    if not np.all(np.isfinite(flat)):
        raise NumericError("non-finite value in forward output")
    v = flat.astype(np.float32).astype(np.float64)
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        return QuantizedMessage(v.size, 1, np.float32(lo), np.float32(hi),
                                np.array([lo], dtype=np.float32),
                                np.zeros(v.size, dtype=np.uint32))
    width = (hi - lo) / n_buckets
    codes, sums, counts = bucketize(v, lo, width, n_buckets)
    midpoints = lo + width * (np.arange(n_buckets) + 0.5)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), midpoints)
    return QuantizedMessage(v.size, n_buckets, np.float32(lo), np.float32(hi),
                            means.astype(np.float32), codes)


def dequantize(msg: QuantizedMessage) -> np.ndarray:
    codes = np.asarray(msg.codes)
    if codes.size != msg.count:
        raise CorruptionError(f"message declares {msg.count} values but carries {codes.size}")
    if codes.size and int(codes.max()) >= msg.n_buckets:
        raise CorruptionError(f"code {int(codes.max())} out of range for {msg.n_buckets} buckets")
    return msg.bucket_means.astype(np.float64)[codes]


def message_bytes(msg: QuantizedMessage) -> int:
    return quantized_size(msg.count, msg.n_buckets)


def quantized_size(count: int, n_buckets: int) -> int:
    return HEADER.size + 4 * n_buckets + math.ceil(count * code_bits(n_buckets) / 8)


def serialize(msg: QuantizedMessage) -> bytes:
    head = HEADER.pack(msg.count, msg.n_buckets, float(msg.min), float(msg.max))
    means = np.asarray(msg.bucket_means, dtype="<f4").tobytes()
    return head + means + pack_codes(msg.codes, msg.bits)


def deserialize(buf: bytes) -> QuantizedMessage:
    if len(buf) < HEADER.size:
        raise CorruptionError("truncated quantized message header")
    count, n, lo, hi = HEADER.unpack_from(buf, 0)
    if n < 1:
        raise CorruptionError("quantized message with zero buckets")
    expected = quantized_size(count, n)
    if len(buf) != expected:
        raise CorruptionError(f"quantized message is {len(buf)} bytes, header implies {expected}")
    means = np.frombuffer(buf, dtype="<f4", count=n, offset=HEADER.size).astype(np.float32)
    codes = unpack_codes(buf[HEADER.size + 4 * n:], count, code_bits(n))
    if count and int(codes.max()) >= n:
        raise CorruptionError(f"code {int(codes.max())} out of range for {n} buckets")
    return QuantizedMessage(count, n, np.float32(lo), np.float32(hi), means, codes)


class ApproxKind(str, enum.Enum):
    ADDITION = "addition"
    MULTIPLY = "multiply"
    UPPER_BOUND = "upper_bound"


@dataclass(frozen=True, eq=False)
class ApproxParams:
    kind: ApproxKind
    a: float = 1.0
    b: float = 0.0
    c: float = 0.0
    dequantized: np.ndarray | None = None


def fit_log_curve(xs, ys) -> tuple[float, float, float]:
    """Least-squares fit of ``y = log(a*x + b) + c`` by damped Gauss-Newton.

    ``c`` is redundant with the scale of ``a`` and ``b`` (shifting ``c`` by
    ``log k`` equals scaling both by ``1/k``), so it is pinned at 0 and only
    ``a`` and ``b`` are iterated.
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    a, b = 1.0, 1.0 - float(x.min())

    def sse(a_: float, b_: float) -> float:
        u = a_ * x + b_
        if np.any(u <= 0):
            return math.inf
        r = np.log(u) - y
        return float(r @ r)

    cur = sse(a, b)
    for _ in range(FIT_ITERATIONS):
        u = a * x + b
        r = np.log(u) - y
        J = np.stack([x / u, 1.0 / u], axis=1)
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        t = 1.0
        while t > 1e-12:
            na, nb = a + t * step[0], b + t * step[1]
            new = sse(na, nb)
            if new <= cur:
                break
            t *= 0.5
        else:
            break
        moved = t * math.hypot(step[0], step[1])
        a, b, prev, cur = na, nb, cur, new
        if moved <= FIT_TOL * (1.0 + math.hypot(a, b)) or prev - cur <= FIT_TOL * max(prev, 1e-300):
            break
    return a, b, 0.0


def fit_approx(kind: ApproxKind | str, msg: QuantizedMessage) -> ApproxParams:
    """Prepare the surrogate parameters the guest needs for its backward pass."""
    kind = ApproxKind(kind)
    if kind is ApproxKind.ADDITION:
        return ApproxParams(kind)
    if kind is ApproxKind.MULTIPLY:
        return ApproxParams(kind, dequantized=dequantize(msg))
    if msg.n_buckets < 2:
        # constant message: no breakpoints to fit
        return ApproxParams(kind, a=0.0, b=0.0)
    a, b, c = fit_log_curve(*msg.breakpoints())
    return ApproxParams(kind, a=a, b=b, c=c)


def backward_approx(params: ApproxParams, o, upstream_grad) -> tuple[np.ndarray, int]:
    """Adjust the gradient w.r.t. the dequantized output into one w.r.t. ``o``.

    Returns ``(gradient, n_fallback)``; ``n_fallback`` counts upper-bound
    coordinates where ``a*o + b <= 0`` and the addition rule was used instead.
    """
    grad = np.asarray(upstream_grad, dtype=np.float64)
    o = np.asarray(o, dtype=np.float64)
    if o.shape != grad.shape:
        o = o.reshape(grad.shape)
    if params.kind is ApproxKind.ADDITION:
        return grad.copy(), 0
    if params.kind is ApproxKind.MULTIPLY:
        deq = np.asarray(params.dequantized, dtype=np.float64).reshape(grad.shape)
        small = np.abs(o) < MULTIPLY_ZERO_TOL
        h = np.where(small, 1.0, deq / np.where(small, 1.0, o))
        return grad * h, 0
    u = params.a * o + params.b
    ok = u > 0
    factor = np.where(ok, params.a / np.where(ok, u, 1.0), 1.0)
    return grad * factor, int(np.count_nonzero(~ok))
