"""Select the compiled Viterbi kernel when available, numpy otherwise.

Set ``ECGSEG_PURE_PYTHON=1`` to force the numpy fallback. The wavelet
correlation always uses ``np.correlate``, which outruns a compiled direct loop.
"""
import os

from . import _fallback

if os.environ.get("ECGSEG_PURE_PYTHON") == "1":
    _kernels = None
else:
    try:
        from . import _kernels
    except ImportError:  # extension not built
        _kernels = None

if _kernels is not None:
    BACKEND = "cython"
    viterbi_kernel = _kernels.viterbi_kernel
else:
    BACKEND = "python"
    viterbi_kernel = _fallback.viterbi_kernel

correlate_kernel = _fallback.correlate_kernel

__all__ = ["BACKEND", "viterbi_kernel", "correlate_kernel"]
