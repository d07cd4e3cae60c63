"""Select the compiled kernels when available, else the pure-Python twin.

Set ``ABMIX_BACKEND=python`` or ``ABMIX_BACKEND=compiled`` to force a choice
(the latter raises if the extension was not built).
"""

import os

_choice = os.environ.get("ABMIX_BACKEND", "").strip().lower()

if _choice == "python":
    from . import _pykernels as kernels
elif _choice == "compiled":
    from . import _kernels as kernels  # type: ignore[no-redef]
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        from . import _pykernels as kernels


def backend_name():
    """Name of the active kernel backend: 'compiled' or 'python'."""
    return kernels.BACKEND_NAME


def get_kernels(name=None):
    """Return a kernel module by name; default is the active backend."""
    if name is None or name == kernels.BACKEND_NAME:
        return kernels
    if name == "python":
        from . import _pykernels
        return _pykernels
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
