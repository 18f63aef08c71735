"""Hot kernels with a compiled backend and a pure-Python fallback.

The compiled module is used when it imports cleanly and ``MIAUDIT_PURE_PYTHON``
is unset; ``BACKEND`` records which one is active.
"""
import os

from . import _pykernels

if os.environ.get("MIAUDIT_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

masked_norm_coo = _impl.masked_norm_coo
mh_steps = _impl.mh_steps


def compiled_available():
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return False
    return True
