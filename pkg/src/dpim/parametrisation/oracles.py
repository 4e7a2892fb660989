"""Alternative per-monomial solvers used as cross-checks of the bordered solve."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..spectral import MasterBasis, solve_dense_linearized, solve_real_mode_basis
from .core import ParametrisationError, sigma

__all__ = ["CrossResonanceError", "cnf_single_master_solve", "modal_oracle_solve", "full_eigenbasis",
           "coefficient_mismatch"]


class CrossResonanceError(ParametrisationError):
    """A slave eigenvalue is resonant with a monomial's eigenvalue combination."""


def cnf_single_master_solve(engine, alpha, nu, mu, res):
    """Real-mode fast path for one master mode pair.

    With ``Y^U_r = phi`` the border column collapses to
    ``(sigma - conj(lam_r)) M phi`` and, after scaling the border row by
    ``lam_r - conj(lam_r)``, the corner entry is one::

        [ sigma^2 M + sigma C + K          (sigma - conj(lam_r)) M phi ] [Psi]   [Xi        ]
        [ (sigma - conj(lam_r)) phi^T M    1                           ] [f_r] = [phi^T M mu]
    """
    basis = engine.basis
    if basis.n != 1 or basis.phi is None:
        raise ParametrisationError("the fast path needs a single master mode from the real-mode basis")
    if engine.style in ("graph", "rnf") or len(res.members) > 1:
        raise ParametrisationError("the fast path is restricted to the complex normal form with |R| <= 1")
    be = engine.be
    N = engine.N
    sig = sigma(alpha, engine.lam, engine.omega)
    Xi = nu + (sig * engine.M + engine.C) @ mu
    A = sig * sig * engine.M + sig * engine.C + engine.K
    f = be.zeros(2)
    if not res.members:
        psi = np.asarray(be.factor(A).solve(Xi))
        return psi, sig * psi - mu, f
    r = res.members[0]
    phi = engine.YU[:, r]
    Mphi = engine.M @ phi
    b = (sig - np.conj(engine.lam[r])) * Mphi
    mat = be.zeros((N + 1, N + 1))
    mat[:N, :N] = A
    mat[:N, N] = b
    mat[N, :N] = b
    mat[N, N] = 1
    rhs = be.zeros(N + 1)
    rhs[:N] = Xi
    rhs[N] = Mphi @ mu
    sol = be.factor(mat).solve(rhs)
    psi = np.asarray(sol[:N])
    f[r] = sol[N]
    ups = sig * psi + f[r] * phi - mu
    return psi, ups, f


def full_eigenbasis(model, basis: MasterBasis) -> MasterBasis:
    """All 2N eigenpairs with the master columns replaced by ``basis``'s own."""
    try:
        full = solve_real_mode_basis(model, list(range(1, model.N + 1)))
    except Exception:
        full = solve_dense_linearized(model, list(range(1, model.N + 1)))
    lamf = full.lam_complex()
    cols = {}
    for k, lk in enumerate(basis.lam_complex()):
        j = int(np.argmin(np.abs(lamf - lk)))
        cols[k] = j
    for k, j in cols.items():
        full.YU[:, j] = basis.backend.to_complex(basis.YU[:, k])
        full.YV[:, j] = basis.backend.to_complex(basis.YV[:, k])
        full.XU[:, j] = basis.backend.to_complex(basis.XU[:, k])
        full.XV[:, j] = basis.backend.to_complex(basis.XV[:, k])
        full.lam[j] = basis.lam_complex()[k]
    full.master_map = cols
    return full


def modal_oracle_solve(engine, alpha, nu, mu, res, cross_tol: float = 1e-10):
    """Solve one homological equation by projection on the full eigenbasis.

    Each eigen-coordinate decouples into ``(sigma - lam_j) xi_j + f_j = S_j``
    with ``S_j = X^V_j^H nu + X^U_j^H M mu``. Resonant masters take
    ``xi_j = 0, f_j = S_j``; every other coordinate takes
    ``xi_j = S_j / (sigma - lam_j)``.
    """
    full: Optional[MasterBasis] = engine.full_basis
    if full is None:
        full = full_eigenbasis(engine.model, engine.basis)
        engine.full_basis = full
    if engine.be.extended:
        raise ParametrisationError("the modal oracle runs in double precision only")
    lam = full.lam_complex()
    sig = complex(sigma(alpha, engine.lam, engine.omega))
    S = np.conj(full.XV).T @ nu + np.conj(full.XU).T @ (engine.M @ mu)
    master_of = {j: k for k, j in full.master_map.items()}
    xi = np.zeros(len(lam), dtype=complex)
    f = np.zeros(2 * engine.n, dtype=complex)
    for j in range(len(lam)):
        k = master_of.get(j)
        if k is not None and k in res.members:
            f[k] = S[j]
            continue
        d = sig - lam[j]
        if abs(d) <= cross_tol * max(abs(sig), abs(lam[j]), 1.0):
            which = "master" if k is not None else "slave"
            raise CrossResonanceError(
                f"monomial {alpha}: sigma={sig:.6g} resonates with {which} eigenvalue {lam[j]:.6g}"
            )
        xi[j] = S[j] / d
    psi = full.YU @ xi
    ups = full.YV @ xi
    return psi, ups, f


def coefficient_mismatch(p, q) -> float:
    """Largest per-monomial relative difference of the stacked ``(Psi, Upsilon, f)`` coefficients.

    Entry-wise ratios are meaningless for coefficients that vanish
    analytically, so each monomial is compared through the norm of its
    stacked coefficient vector.
    """
    if set(p.order) != set(q.order):
        raise ValueError("parametrisations cover different monomial sets")
    be_p, be_q = p.backend, q.backend
    worst = 0.0
    for a in p.order:
        x = np.concatenate([be_p.to_complex(v) for v in (p.entries[a].psi, p.entries[a].ups, p.entries[a].f)])
        y = np.concatenate([be_q.to_complex(v) for v in (q.entries[a].psi, q.entries[a].ups, q.entries[a].f)])
        scale = max(np.linalg.norm(x), np.linalg.norm(y))
        if scale == 0.0:
            continue
        worst = max(worst, float(np.linalg.norm(x - y) / scale))
    return worst
