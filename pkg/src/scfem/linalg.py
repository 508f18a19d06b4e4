"""Sparse symmetric CSR matrices and a Jacobi-preconditioned CG solver.

The matvec runs on the selected kernel backend (compiled or numpy); the
CG iteration itself lives here, once, since its per-iteration Python
overhead is negligible against the matvec.
"""

import numpy as np

from scfem import backend


class PcgError(RuntimeError):
    """CG failed; carries the relative residual that was reached."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class SparseSymMatrix:
    """Symmetric positive (semi)definite matrix in CSR form."""

    def __init__(self, n, indptr, indices, data):
        self.n = int(n)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=float)

    @classmethod
    def from_coo(cls, n, rows, cols, vals):
        """Build CSR from triplets, summing duplicates deterministically."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        if n == 0 or len(rows) == 0:
            return cls(n, np.zeros(n + 1, dtype=np.int64), [], [])
        order = np.lexsort((cols, rows))
        r, c, v = rows[order], cols[order], vals[order]
        first = np.empty(len(r), dtype=bool)
        first[0] = True
        first[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
        starts = np.flatnonzero(first)
        data = np.add.reduceat(v, starts)
        indices = c[starts]
        counts = np.bincount(r[starts], minlength=n)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return cls(n, indptr, indices, data)

    @property
    def nnz(self):
        return len(self.data)

    def matvec(self, x, out=None):
        if len(x) != self.n:
            raise ValueError(f"dimension mismatch: {len(x)} vs {self.n}")
        return backend.spmv(self.indptr, self.indices, self.data, np.asarray(x, dtype=float), out)

    def _row_ids(self):
        return np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))

    def diagonal(self):
        if not hasattr(self, "_diag"):
            rows = self._row_ids()
            on_diag = self.indices == rows
            d = np.zeros(self.n)
            d[rows[on_diag]] = self.data[on_diag]
            self._diag = d
        return self._diag

    def submatrix(self, ids):
        """Symmetric restriction to the given (sorted) index subset."""
        ids = np.asarray(ids, dtype=np.int64)
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[ids] = np.arange(len(ids))
        r = remap[self._row_ids()]
        c = remap[self.indices]
        keep = (r >= 0) & (c >= 0)
        return SparseSymMatrix.from_coo(len(ids), r[keep], c[keep], self.data[keep])

    def to_dense(self):
        out = np.zeros((self.n, self.n))
        for i in range(self.n):
            row = slice(self.indptr[i], self.indptr[i + 1])
            out[i, self.indices[row]] = self.data[row]
        return out


def spmv(A, x):
    return A.matvec(x)


def dot(x, y):
    if len(x) != len(y):
        raise ValueError("dimension mismatch in dot")
    return float(np.dot(x, y))


def axpy(alpha, x, y):
    """alpha*x + y."""
    if len(x) != len(y):
        raise ValueError("dimension mismatch in axpy")
    return alpha * np.asarray(x) + np.asarray(y)


def pcg(A, b, *, rel_tol=1e-12, max_iter=None, x0=None, record_iterates=None):
    """Jacobi-preconditioned conjugate gradients.

    Returns (x, n_iter, relative residual).  ``record_iterates``, if a list,
    receives a copy of every iterate (testing hook).
    """
    n = A.n
    if max_iter is None:
        max_iter = 20 * max(n, 1)
    b = np.asarray(b, dtype=float)
    if len(b) != n:
        raise ValueError("dimension mismatch in pcg")
    if n == 0:
        return np.zeros(0), 0, 0.0
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    d = A.diagonal()
    if (d == 0.0).any():
        raise PcgError("zero diagonal entry; Jacobi preconditioner undefined")
    dinv = 1.0 / d

    if x0 is None:
        x = np.zeros(n)
        r = b.copy()
    else:
        x = np.asarray(x0, dtype=float).copy()
        r = b - A.matvec(x)
    rnorm = np.linalg.norm(r)
    if rnorm <= rel_tol * bnorm:
        return x, 0, rnorm / bnorm
    z = dinv * r
    p = z.copy()
    rz = dot(r, z)
    for it in range(1, max_iter + 1):
        Ap = A.matvec(p)
        alpha = rz / dot(p, Ap)
        x += alpha * p
        r -= alpha * Ap
        if record_iterates is not None:
            record_iterates.append(x.copy())
        rnorm = np.linalg.norm(r)
        if rnorm <= rel_tol * bnorm:
            return x, it, rnorm / bnorm
        z = dinv * r
        rz_new = dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, max_iter, rnorm / bnorm


def pcg_solve(A, b, rel_tol=1e-12, max_iter=None, x0=None):
    """Solve A x = b to ``rel_tol`` relative residual; raises PcgError on
    non-convergence."""
    x, it, relres = pcg(A, b, rel_tol=rel_tol, max_iter=max_iter, x0=x0)
    if relres > rel_tol:
        raise PcgError(f"pcg did not converge in {it} iterations "
                       f"(relative residual {relres:.3e})", achieved=relres)
    return x
