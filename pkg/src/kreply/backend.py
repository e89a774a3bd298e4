"""Kernel backend selection.

Imports the compiled extension when present, otherwise the numpy fallback.
Set KREPLY_KERNELS=py to force the fallback, KREPLY_KERNELS=compiled to
require the extension (ImportError if it is missing).  Both backends
implement identical math; results agree to floating-point rounding, and a
single backend is bit-reproducible run to run.
"""

import os

from . import _kernels_py

_choice = os.environ.get("KREPLY_KERNELS", "auto")

if _choice == "py":
    _impl = _kernels_py
elif _choice == "compiled":
    from . import _kernels as _impl  # type: ignore[no-redef]
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

HAS_COMPILED_KERNELS = bool(_impl.COMPILED)
KERNEL_BACKEND = "compiled" if HAS_COMPILED_KERNELS else "py"

gru_cell_forward = _impl.gru_cell_forward
gru_cell_backward = _impl.gru_cell_backward


def get_backend(name: str):
    """Return a specific kernel module by name ('py' or 'compiled')."""
    if name == "py":
        return _kernels_py
    if name == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")
