"""Backend selection for the hot kernels.

The compiled extension ``icpflow._core`` is used when it imports; otherwise the
numpy fallback is used. Setting ``ICPFLOW_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _fallback

try:
    if os.environ.get("ICPFLOW_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _core as _backend
    BACKEND = "compiled"
except ImportError:
    _backend = _fallback
    BACKEND = "python"

histogram_votes = _backend.histogram_votes
KDTree = _backend.KDTree
density_components = _backend.density_components


def available_backends():
    """Map of backend name to kernel module, for tests and benchmarks."""
    found = {"python": _fallback}
    try:
        from . import _core
        found["compiled"] = _core
    except ImportError:
        pass
    return found
