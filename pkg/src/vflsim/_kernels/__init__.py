"""Quantizer hot loops.

The compiled extension is used when it was built; otherwise the numpy
fallback is imported. Set ``VFLSIM_PURE_PYTHON=1`` to force the fallback.
"""

import os

BACKEND = "python"

if os.environ.get("VFLSIM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._ckernels import bucketize, pack_codes, unpack_codes  # noqa: F401

        BACKEND = "cython"
    except ImportError:
        pass

if BACKEND == "python":
    from ._fallback import bucketize, pack_codes, unpack_codes  # noqa: F401

__all__ = ["BACKEND", "bucketize", "pack_codes", "unpack_codes"]
