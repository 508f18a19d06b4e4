"""Kernel backend selection.

The hot kernels (CSR matvec, local stiffness blocks) exist twice: as a
Cython extension and as a vectorized numpy fallback.  The compiled one is
preferred when importable; set ``SCFEM_BACKEND=numpy`` or
``SCFEM_BACKEND=compiled`` to force a choice (forcing the compiled one
raises if the extension was not built).
"""

import os

from scfem import _kernels_np

_forced = os.environ.get("SCFEM_BACKEND", "").strip().lower()

if _forced == "numpy":
    kernels = _kernels_np
elif _forced == "compiled":
    from scfem import _kernels as kernels  # noqa: F401  (ImportError is the message)
else:
    try:
        from scfem import _kernels as kernels
    except ImportError:
        kernels = _kernels_np

BACKEND_NAME = kernels.BACKEND_NAME
spmv = kernels.spmv
local_stiffness = kernels.local_stiffness
