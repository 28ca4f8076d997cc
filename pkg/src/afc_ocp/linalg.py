"""Sparse operator plumbing: combinations, solves, and reusable factorizations.

Operators are scipy CSR matrices throughout.  Solves check the actual
residual instead of trusting the backend: a direct factorization gets one
round of iterative refinement, and if a factorization cannot be formed a
diagonally preconditioned restarted Krylov solve takes over.  Failure to
reach the requested relative residual raises, carrying the residual reached.
"""

import numpy as np
from scipy import io as spio
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import InvalidArgumentError, SolverFailure

DEFAULT_TOL = 1e-10


def _as_square_csr(a):
    if not sparse.issparse(a):
        raise InvalidArgumentError("expected a sparse operator")
    if a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"operator is not square: shape {a.shape}")
    return a.tocsr()


def matvec(a, x):
    x = np.asarray(x, dtype=float)
    if not sparse.issparse(a):
        raise InvalidArgumentError("expected a sparse operator")
    if x.shape != (a.shape[1],):
        raise InvalidArgumentError(
            f"vector length {x.shape} does not match operator shape {a.shape}"
        )
    return a @ x


def axpy_combine(terms):
    """Entrywise linear combination sum_k c_k A_k; the result pattern is the
    union of the input patterns (cancellation keeps positions, with zeros).

    Parameters
    ----------
    terms : iterable of (float, sparse matrix)
    """
    terms = list(terms)
    if not terms:
        raise InvalidArgumentError("empty combination")
    shape = None
    rows, cols, data = [], [], []
    for c, a in terms:
        if not sparse.issparse(a):
            raise InvalidArgumentError("expected sparse operators")
        if shape is None:
            shape = a.shape
        elif a.shape != shape:
            raise InvalidArgumentError(
                f"dimension mismatch in combination: {a.shape} vs {shape}"
            )
        coo = a.tocoo()
        rows.append(coo.row)
        cols.append(coo.col)
        data.append(float(c) * coo.data)
    # Summing concatenated triplets keeps the union pattern: positions whose
    # values cancel stay as explicit zeros instead of being pruned.
    acc = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=shape,
    ).tocsr()
    acc.sort_indices()
    return acc


class Factorization:
    """LU factors of a sparse operator, reusable across many right-hand sides.

    ``solve`` verifies the residual and applies one step of iterative
    refinement before giving up.
    """

    def __init__(self, a):
        a = _as_square_csr(a)
        self._a = a
        self._lu = spla.splu(a.tocsc())

    @property
    def shape(self):
        return self._a.shape

    def solve(self, rhs, tol=DEFAULT_TOL):
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (self._a.shape[0],):
            raise InvalidArgumentError(
                f"rhs length {rhs.shape} does not match operator shape {self._a.shape}"
            )
        rhs_norm = np.linalg.norm(rhs)
        if rhs_norm == 0.0:
            return np.zeros_like(rhs)
        x = self._lu.solve(rhs)
        res = np.linalg.norm(rhs - self._a @ x)
        if res > tol * rhs_norm:
            x = x + self._lu.solve(rhs - self._a @ x)
            res = np.linalg.norm(rhs - self._a @ x)
            if res > tol * rhs_norm:
                raise SolverFailure(
                    f"direct solve stalled at relative residual {res / rhs_norm:.3e}",
                    residual=res / rhs_norm,
                )
        return x


def factorize(a):
    return Factorization(a)


def solve(a, rhs, tol=DEFAULT_TOL):
    """Solve a x = rhs to relative residual ``tol``.

    Tries a direct factorization first; if the factorization cannot be
    formed or stalls, falls back to restarted GMRES with diagonal
    preconditioning, capped at 10 n iterations.
    """
    a = _as_square_csr(a)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (a.shape[0],):
        raise InvalidArgumentError(
            f"rhs length {rhs.shape} does not match operator shape {a.shape}"
        )
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0.0:
        return np.zeros_like(rhs)
    try:
        return Factorization(a).solve(rhs, tol)
    except (RuntimeError, ValueError):
        pass

    n = a.shape[0]
    d = a.diagonal().copy()
    d[d == 0.0] = 1.0
    precond = spla.LinearOperator(a.shape, matvec=lambda v: v / d)
    restart = min(50, n)
    maxiter = max(1, (10 * n) // restart)
    x, _ = spla.gmres(
        a, rhs, rtol=tol, atol=0.0, restart=restart, maxiter=maxiter, M=precond
    )
    res = np.linalg.norm(rhs - a @ x) / rhs_norm
    if res > tol:
        raise SolverFailure(
            f"iterative fallback stalled at relative residual {res:.3e}",
            residual=res,
        )
    return x


def dump_matrix_market(a, path):
    """Write an operator to a MatrixMarket coordinate file."""
    spio.mmwrite(str(path), _as_square_csr(a).tocoo())
