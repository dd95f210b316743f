import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vflsim import _kernels
from vflsim._kernels import _fallback

try:
    from vflsim._kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


def test_backend_reported():
    assert _kernels.BACKEND in ("cython", "python")


def test_fallback_bucketize_hand():
    codes, sums, counts = _fallback.bucketize(np.array([0.0, 1.0, 2.0, 3.0]), 0.0, 1.5, 2)
    assert codes.tolist() == [0, 0, 1, 1]
    assert sums.tolist() == [1.0, 5.0] and counts.tolist() == [2, 2]


def test_pack_one_bit_lsb_first():
    buf = _fallback.pack_codes(np.array([1, 0, 0, 0, 0, 0, 0, 0, 1], dtype=np.uint32), 1)
    assert buf == bytes([0b00000001, 0b00000001])


def test_pack_two_bit_layout():
    # codes 1,2,3,0 -> bits 10 01 11 00 read LSB-first -> 0b00111001
    buf = _fallback.pack_codes(np.array([1, 2, 3, 0], dtype=np.uint32), 2)
    assert buf == bytes([0b00111001])


def test_n2_count1000_is_125_bytes():
    codes = np.random.default_rng(0).integers(0, 2, 1000).astype(np.uint32)
    assert len(_kernels.pack_codes(codes, 1)) == 125


@settings(max_examples=60, deadline=None)
@given(bits=st.integers(1, 16), n=st.integers(0, 300), seed=st.integers(0, 10**6))
def test_pack_unpack_roundtrip(bits, n, seed):
    codes = np.random.default_rng(seed).integers(0, 2**bits, n).astype(np.uint32)
    buf = _kernels.pack_codes(codes, bits)
    assert len(buf) == (n * bits + 7) // 8
    np.testing.assert_array_equal(_kernels.unpack_codes(buf, n, bits), codes)


@needs_ext
@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 500), nb=st.integers(2, 300), seed=st.integers(0, 10**6))
def test_backends_agree(n, nb, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n).astype(np.float32).astype(np.float64)
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        return
    w = (hi - lo) / nb
    a = _fallback.bucketize(v, lo, w, nb)
    b = _ckernels.bucketize(v, lo, w, nb)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[2], b[2])
    np.testing.assert_allclose(a[1], b[1], rtol=1e-12, atol=1e-12)
    bits = (nb - 1).bit_length()
    assert _fallback.pack_codes(a[0], bits) == _ckernels.pack_codes(b[0], bits)
    buf = _fallback.pack_codes(a[0], bits)
    np.testing.assert_array_equal(_fallback.unpack_codes(buf, n, bits),
                                  _ckernels.unpack_codes(buf, n, bits))


@pytest.mark.parametrize("mod", [_fallback, _ckernels], ids=["numpy", "cython"])
def test_unpack_short_buffer(mod):
    if mod is None:
        pytest.skip("compiled kernels not built")
    with pytest.raises(ValueError):
        mod.unpack_codes(b"\x00", 5, 4)


def test_env_forces_fallback():
    import os
    import subprocess
    import sys
    env = dict(os.environ, VFLSIM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import vflsim._kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
