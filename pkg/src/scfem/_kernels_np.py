"""Pure-numpy implementations of the hot kernels.

Drop-in twin of the compiled extension ``scfem._kernels``; see
``scfem.backend`` for how one of the two gets selected at import time.
"""

import numpy as np

BACKEND_NAME = "numpy"


def spmv(indptr, indices, data, x, out=None):
    """y = A @ x for a CSR matrix given by (indptr, indices, data)."""
    if out is None:
        out = np.empty(len(indptr) - 1)
    # reduceat handles empty rows wrongly; assembled FE matrices always
    # carry a diagonal entry, so every row is non-empty here.
    np.add.reduceat(data * x[indices], indptr[:-1], out=out)
    return out


def local_stiffness(grads, warea):
    """Per-triangle 3x3 stiffness blocks.

    grads: (nt, 3, 2) hat-function gradients, warea: (nt,) area times
    the coefficient averaged over the triangle's quadrature points.
    """
    return np.einsum("tid,tjd,t->tij", grads, grads, warea, optimize=True)
