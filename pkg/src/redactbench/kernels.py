"""Backend selection for the hot loops.

The compiled extension is used when importable; otherwise the NumPy fallback.
``REDACTBENCH_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _fallback

if os.environ.get("REDACTBENCH_PURE_PYTHON"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback
        BACKEND = "python"

median_filter = _impl.median_filter
pcg32_bits = _impl.pcg32_bits
pcg32_words = _impl.pcg32_words


def available_backends():
    """Map backend name -> module for every backend importable here."""
    backends = {"python": _fallback}
    try:
        from . import _kernels
        backends["cython"] = _kernels
    except ImportError:
        pass
    return backends
