"""Scalar backends: hardware complex128 or mpmath extended precision.

Extended precision uses numpy object arrays holding ``mpmath.mpc`` values,
so the same array code (``@``, ``np.conj``, ``np.add.at``) runs in both modes.
Only factorisation, eigen-decomposition and elementary functions need
backend-specific implementations.
"""

from __future__ import annotations

import contextlib
from typing import Optional

import mpmath
import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

__all__ = ["Backend", "SingularMatrixError", "float_backend"]


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a (bordered) system is numerically singular."""


class _DenseLU:
    def __init__(self, A: np.ndarray, rcond_tol: float):
        self.lu, self.piv = scipy.linalg.lu_factor(A, check_finite=True)
        anorm = np.linalg.norm(A, 1)
        gecon = scipy.linalg.get_lapack_funcs("gecon", (self.lu,))
        rcond, info = gecon(self.lu, anorm, norm="1")
        self.rcond = float(rcond)
        if not np.isfinite(self.rcond) or self.rcond < rcond_tol:
            raise SingularMatrixError(f"matrix is singular to working precision (rcond={self.rcond:.3e})")

    def solve(self, b):
        return scipy.linalg.lu_solve((self.lu, self.piv), b)


class _SparseLU:
    def __init__(self, A, rcond_tol: float):
        try:
            self.lu = scipy.sparse.linalg.splu(scipy.sparse.csc_matrix(A))
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from None
        d = np.abs(self.lu.U.diagonal())
        self.rcond = float(d.min() / d.max()) if d.size and d.max() > 0 else 0.0
        if self.rcond < rcond_tol:
            raise SingularMatrixError(f"matrix is singular to working precision (pivot ratio={self.rcond:.3e})")

    def solve(self, b):
        return self.lu.solve(np.asarray(b, dtype=complex))


class _MpLU:
    def __init__(self, A: np.ndarray, rcond_tol: float):
        self.A = mpmath.matrix(A.tolist())
        n = self.A.rows
        # LU with partial pivoting, reused across right-hand sides
        self.LU, self.p = mpmath.mp.LU_decomp(self.A.copy())
        diag = [abs(self.LU[i, i]) for i in range(n)]
        big = max(diag) if diag else 1
        self.rcond = float(min(diag) / big) if big else 0.0
        if self.rcond < rcond_tol:
            raise SingularMatrixError(f"matrix is singular to working precision (pivot ratio={self.rcond:.3e})")

    def solve(self, b):
        b = mpmath.matrix(list(b))
        x = mpmath.mp.L_solve(self.LU, b.copy(), self.p)
        x = mpmath.mp.U_solve(self.LU, x)
        return np.array([x[i] for i in range(x.rows)], dtype=object)


class Backend:
    """Array construction and linear algebra for one precision setting.

    Parameters
    ----------
    dps : int or None
        Decimal digits for mpmath arithmetic; ``None`` selects complex128.
    """

    def __init__(self, dps: Optional[int] = None):
        self.dps = dps

    @property
    def extended(self) -> bool:
        return self.dps is not None

    @contextlib.contextmanager
    def context(self):
        if self.dps is None:
            yield
        else:
            with mpmath.workdps(self.dps):
                yield

    def __repr__(self):
        return f"Backend(dps={self.dps})"

    # -- construction
    def zeros(self, shape):
        if self.dps is None:
            return np.zeros(shape, dtype=complex)
        out = np.empty(shape, dtype=object)
        out.fill(mpmath.mpc(0))
        return out

    def asarray(self, a):
        """Convert to the backend's complex array type."""
        if self.dps is None:
            return np.asarray(a, dtype=complex)
        a = np.asarray(a)
        out = np.empty(a.shape, dtype=object)
        flat = out.reshape(-1)
        for i, v in enumerate(a.reshape(-1)):
            flat[i] = mpmath.mpc(v) if not isinstance(v, mpmath.mpc) else v
        return out

    def real_matrix(self, a):
        if self.dps is None:
            return np.asarray(a, dtype=float)
        a = np.asarray(a, dtype=float)
        out = np.empty(a.shape, dtype=object)
        flat = out.reshape(-1)
        for i, v in enumerate(a.reshape(-1)):
            flat[i] = mpmath.mpf(v)
        return out

    def scalar(self, v):
        return complex(v) if self.dps is None else mpmath.mpc(v)

    def to_complex(self, a) -> np.ndarray:
        """Down-convert to complex128."""
        a = np.asarray(a)
        if a.dtype != object:
            return a.astype(complex)
        return np.array([complex(v) for v in a.reshape(-1)], dtype=complex).reshape(a.shape)

    # -- elementary functions
    def sqrt(self, x):
        return np.sqrt(x) if self.dps is None else mpmath.sqrt(x)

    def exp(self, x):
        if self.dps is None:
            return np.exp(x)
        if isinstance(x, np.ndarray):
            return np.array([mpmath.exp(v) for v in x.reshape(-1)], dtype=object).reshape(x.shape)
        return mpmath.exp(x)

    def norm(self, v) -> float:
        v = np.asarray(v)
        if v.dtype != object:
            return float(np.linalg.norm(v))
        return float(mpmath.sqrt(sum(abs(x) ** 2 for x in v.reshape(-1))))

    def imag(self, x) -> float:
        return float(np.imag(x)) if self.dps is None else float(mpmath.im(x))

    def real(self, x) -> float:
        return float(np.real(x)) if self.dps is None else float(mpmath.re(x))

    # -- linear algebra
    def factor(self, A, rcond_tol: Optional[float] = None):
        """LU factorisation with a conditioning check."""
        if self.dps is None:
            tol = 1e3 * np.finfo(float).eps if rcond_tol is None else rcond_tol
            if scipy.sparse.issparse(A):
                return _SparseLU(A, tol)
            return _DenseLU(np.asarray(A, dtype=complex), tol)
        tol = 10.0 ** (-(self.dps - 5)) if rcond_tol is None else rcond_tol
        A = scipy.sparse.csr_matrix(A).toarray() if scipy.sparse.issparse(A) else A
        return _MpLU(np.asarray(A, dtype=object), tol)

    def eigh_generalised(self, K, M):
        """Symmetric-definite eigenproblem ``K phi = w2 M phi`` (ascending ``w2``)."""
        if self.dps is None:
            return scipy.linalg.eigh(K, M)
        Km = mpmath.matrix(np.asarray(K, dtype=float).tolist())
        Mm = mpmath.matrix(np.asarray(M, dtype=float).tolist())
        Lc = mpmath.cholesky(Mm)
        Li = mpmath.inverse(Lc)
        S = Li * Km * Li.T
        S = (S + S.T) / 2
        w2, Q = mpmath.eigsy(S)
        phi = Li.T * Q
        n = Km.rows
        w = np.array([w2[i] for i in range(n)], dtype=object)
        P = np.array([[phi[i, j] for j in range(n)] for i in range(n)], dtype=object)
        order = np.argsort([float(x) for x in w])
        return w[order], P[:, order]


def float_backend() -> Backend:
    return Backend(None)
