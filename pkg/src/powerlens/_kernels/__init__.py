"""Hot loops with a compiled backend and a pure-Python fallback.

The compiled module is used when it was built and ``POWERLENS_PURE_PYTHON``
is unset. ``BACKEND`` names the active implementation.
"""
import os

from . import _pykernels

if os.environ.get("POWERLENS_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

best_split = _impl.best_split
cpu_load_batch = _impl.cpu_load_batch
antiderivative = _impl.antiderivative


def available_backends():
    """Map of backend name to kernel module, for tests and benchmarks."""
    backends = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        backends["cython"] = _ckernels
    return backends
