"""Pick the compiled kernels when available, else the pure-Python twin.

Set ``CHORDARC_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _fallback

COMPILED = False
if not os.environ.get("CHORDARC_PURE_PYTHON"):
    try:
        from . import _kernels as _impl

        COMPILED = True
    except ImportError:  # extension not built
        _impl = _fallback
else:
    _impl = _fallback

FieldKernel = _impl.FieldKernel
cell_potential = _impl.cell_potential
layer_potential = _impl.layer_potential


def backend(name: str):
    """Return the kernel module by name: ``"compiled"`` or ``"python"``."""
    if name == "python":
        return _fallback
    if name == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(name)
