"""Select the compiled kernels, falling back to NumPy.

Set ``MALALIMIT_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels as python_kernels

compiled_kernels = None
if os.environ.get("MALALIMIT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled_kernels
    except ImportError:  # extension not built
        compiled_kernels = None

kernels = compiled_kernels if compiled_kernels is not None else python_kernels
BACKEND = "compiled" if compiled_kernels is not None else "python"


def get_kernels(name: str | None = None):
    """Kernel module by name (``"compiled"``, ``"python"``) or the import-time default."""
    if name is None:
        return kernels
    if name == "python":
        return python_kernels
    if name == "compiled":
        if compiled_kernels is None:
            raise RuntimeError("compiled kernels are not available; build the extension first")
        return compiled_kernels
    raise ValueError(f"unknown backend {name!r}")
