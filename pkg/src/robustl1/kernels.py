"""Backend selection for the subset-enumeration kernels.

The compiled extension is used when it imports; otherwise the NumPy fallback.
Set ``ROBUSTL1_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("ROBUSTL1_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "compiled"
    except ImportError:
        pass

first_deficient_subset = _impl.first_deficient_subset
max_hyperplane_count = _impl.max_hyperplane_count
v1_max = _impl.v1_max
error_constants = _impl.error_constants


def backend_module(name):
    """Return the kernel module by name: ``python`` or ``compiled``."""
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
