"""Sparse LU factorization wrappers (SuperLU via scipy)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

# minimum-degree ordering on A^T + A suits the banded 2D stencils best; the
# matrices are structurally symmetric, so preferring diagonal pivots keeps that
# ordering intact (several times less fill than full partial pivoting)
ORDERING = "MMD_AT_PLUS_A"
PIVOT_THRESHOLD = 0.1

__all__ = ["SingularMatrixError", "LocalFactorization", "factorize", "direct_solve", "relative_residual"]


class SingularMatrixError(RuntimeError):
    pass


@dataclass
class LocalFactorization:
    """Reusable exact factorization of one sparse matrix."""

    lu: spla.SuperLU
    shape: tuple
    label: str = ""

    def solve(self, b):
        b = np.asarray(b)
        if b.shape[0] != self.shape[0]:
            raise ValueError("right-hand side has the wrong length")
        out = self.lu.solve(np.asarray(b, dtype=complex))
        if not np.all(np.isfinite(out)):
            raise SingularMatrixError(f"non-finite solution from factorization {self.label}".strip())
        return out


def factorize(matrix, label=""):
    """LU factorization of a square sparse matrix; raises on exact singularity."""
    A = sp.csc_matrix(matrix, dtype=complex)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    try:
        lu = spla.splu(A, permc_spec=ORDERING, diag_pivot_thresh=PIVOT_THRESHOLD, options={"SymmetricMode": True})
    except RuntimeError:
        lu = None
    if lu is None or not _stable(A, lu):
        # fall back to threshold-1 partial pivoting
        try:
            lu = spla.splu(A, permc_spec=ORDERING)
        except RuntimeError as exc:
            raise SingularMatrixError(f"factorization failed{' for ' + label if label else ''}: {exc}") from exc
    return LocalFactorization(lu, A.shape, label)


def _stable(A, lu, tol=1e-10):
    # one probe solve; weak pivots show up as a large residual
    b = np.exp(1j * np.arange(A.shape[0]))
    x = lu.solve(b)
    return bool(np.all(np.isfinite(x))) and relative_residual(A, x, b) <= tol


def relative_residual(matrix, x, b):
    nb = np.linalg.norm(b)
    r = np.linalg.norm(matrix @ x - b)
    return r / nb if nb > 0 else r


def direct_solve(system, rhs=None, check=1e-8):
    """Solve ``H x = b`` for a :class:`SparseSystem` (or a bare matrix plus ``rhs``)."""
    if rhs is None:
        matrix, rhs = system.matrix, system.rhs
    else:
        matrix = system
    x = factorize(matrix).solve(rhs)
    if check is not None and relative_residual(matrix, x, rhs) > check:
        raise SingularMatrixError("direct solve residual too large; matrix is numerically singular")
    return x
