"""Damped eigenstructure and the normalised master basis.

With the first-order state ``y = [V; U]`` the linearised system reads
``B y' = A y`` where ``B = diag(M, M)`` and ``A = [[-C, -K], [M, 0]]``.
Right eigenvectors are split as ``Y = [Y^V; Y^U]`` with ``Y^V = lambda Y^U``
and left eigenvectors as ``X = [X^V; X^U]``. Columns are normalised so that
``X^H B Y = I`` on the master block, where ``^H`` is the conjugate transpose.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .model import MechModel, ModelError
from .numerics import Backend

__all__ = [
    "SpectralError",
    "MasterBasis",
    "solve_real_mode_basis",
    "solve_dense_linearized",
    "eigen_residuals",
    "spectrum_report",
]


class SpectralError(RuntimeError):
    """Raised when the requested eigen-decomposition is not admissible."""


@dataclass
class MasterBasis:
    """Master eigenvalues and right/left eigenvector halves.

    Attributes
    ----------
    master : list of int
        Zero-based mode indices (ascending undamped frequency).
    lam : ndarray, shape (2n,)
        ``(lambda_1..lambda_n, conj(lambda_1)..conj(lambda_n))``.
    YU, YV, XU, XV : ndarray, shape (N, 2n)
    omega, xi : ndarray, shape (n,)
        Undamped frequency and damping ratio of each master mode.
    phi : ndarray or None
        Real mass-normalised shapes of the master modes (real-mode path).
    full_lambda : ndarray
        All computed eigenvalues sorted less damped first.
    """

    master: list
    lam: np.ndarray
    YU: np.ndarray
    YV: np.ndarray
    XU: np.ndarray
    XV: np.ndarray
    omega: np.ndarray
    xi: np.ndarray
    kind: str = "real"
    phi: Optional[np.ndarray] = None
    full_lambda: Optional[np.ndarray] = None
    backend: Backend = field(default_factory=Backend)

    @property
    def n(self) -> int:
        return len(self.master)

    @property
    def N(self) -> int:
        return self.YU.shape[0]

    def lam_complex(self) -> np.ndarray:
        return self.backend.to_complex(self.lam)

    def to_dict(self) -> dict:
        lam = self.lam_complex()
        return {
            "kind": self.kind,
            "master": [m + 1 for m in self.master],
            "modes": [
                {
                    "index": m + 1,
                    "lambda": [lam[k].real, lam[k].imag],
                    "omega": float(self.omega[k]),
                    "frequency_hz_like": float(self.omega[k]) / (2 * np.pi),
                    "xi": float(self.xi[k]),
                }
                for k, m in enumerate(self.master)
            ],
        }


def _phase_fix(v: np.ndarray) -> np.ndarray:
    j = int(np.argmax(np.abs(v)))
    return v * (abs(v[j]) / v[j])


def solve_real_mode_basis(model: MechModel, master: Sequence[int], backend: Optional[Backend] = None,
                          damping_tol: float = 1e-8) -> MasterBasis:
    """Master basis from undamped modes with modal damping.

    Parameters
    ----------
    model : MechModel
    master : sequence of int
        One-based mode indices, ascending undamped frequency.
    backend : Backend, optional
        Extended precision backend; float64 by default.
    damping_tol : float
        Largest admissible off-diagonal modal damping relative to the
        largest diagonal entry.

    Raises
    ------
    SpectralError
        Non-proportional damping or an overdamped master mode.
    """
    be = backend or Backend()
    master = _check_master(master, model.N)
    with be.context():
        w2, phi_all = be.eigh_generalised(model.K, model.M)
        if be.extended:
            phi_f = np.array(phi_all, dtype=float)
        else:
            phi_f = phi_all
        for k in range(phi_all.shape[1]):
            j = int(np.argmax(np.abs(phi_f[:, k])))
            if phi_f[j, k] < 0:
                phi_all[:, k] = -phi_all[:, k]
                phi_f[:, k] = -phi_f[:, k]
        Cm = phi_f.T @ model.C @ phi_f
        off = Cm - np.diag(np.diag(Cm))
        scale = max(float(np.abs(np.diag(Cm)).max()), float(np.abs(model.C).max()), 1e-300)
        if np.abs(off).max() > damping_tol * scale:
            raise SpectralError(
                "damping is not diagonalised by the undamped modes "
                f"(max off-diagonal {np.abs(off).max():.3e}); use the dense linearised path"
            )
        n = len(master)
        N = model.N
        lam = be.zeros(2 * n)
        YU = be.zeros((N, 2 * n))
        XV = be.zeros((N, 2 * n))
        omega = np.zeros(n)
        xi = np.zeros(n)
        Cr = be.real_matrix(model.C)
        phis = []
        for a, m in enumerate(master):
            ph = phi_all[:, m]
            if be.extended:
                w = be.sqrt(w2[m])
                c = sum(ph[i] * sum(Cr[i, j] * ph[j] for j in range(N)) for i in range(N))
            else:
                w = np.sqrt(max(w2[m], 0.0))
                c = ph @ model.C @ ph
            if float(w) <= 0:
                raise SpectralError(f"mode {m + 1} has zero frequency")
            z = c / (2 * w)
            if float(z) >= 1.0:
                raise SpectralError(f"master mode {m + 1} is overdamped (xi={float(z):.3f})")
            lk = -z * w + 1j * w * be.sqrt(1 - z * z)
            lam[a], lam[a + n] = lk, np.conj(lk)
            YU[:, a] = ph
            YU[:, a + n] = ph
            # X^H B Y = 1 with X^V = phi / conj(lam - conj(lam))
            XV[:, a] = ph / np.conj(lk - np.conj(lk))
            XV[:, a + n] = ph / np.conj(np.conj(lk) - lk)
            omega[a], xi[a] = float(w), float(z)
            phis.append(np.array(ph, dtype=float))
        YV = YU * lam[None, :]
        # X^U = -lam X^V from the real-mode identity (lam M + C) phi = -conj(lam) M phi
        XU = -XV * lam[None, :]
        full = []
        for m in range(model.N):
            w = float(np.sqrt(max(float(w2[m]), 0.0)))
            c = float(phi_f[:, m] @ model.C @ phi_f[:, m])
            z = c / (2 * w) if w > 0 else 0.0
            if z < 1:
                lk = complex(-z * w, w * np.sqrt(1 - z * z))
                full += [lk, lk.conjugate()]
            else:
                r = w * np.sqrt(z * z - 1)
                full += [complex(-z * w + r), complex(-z * w - r)]
        full = np.array(sorted(full, key=lambda v: (-v.real, v.imag)))
    return MasterBasis(list(master), lam, YU, YV, XU, XV, omega, xi, "real", np.column_stack(phis),
                       full, be)


def _check_master(master, N) -> list:
    out = []
    for m in master:
        m = int(m)
        if not 1 <= m <= N:
            raise SpectralError(f"master mode {m} out of range 1..{N}")
        out.append(m - 1)
    if len(set(out)) != len(out) or not out:
        raise SpectralError("master modes must be distinct and non-empty")
    return out


def solve_dense_linearized(model: MechModel, master: Optional[Sequence[int]] = None,
                           window: Optional[tuple] = None, dense_cap: int = 500) -> MasterBasis:
    """Master basis from the full 2N first-order eigenproblem.

    Parameters
    ----------
    model : MechModel
    master : sequence of int, optional
        One-based mode indices ranked by ascending ``|lambda|``.
    window : (float, float), optional
        Select every mode whose ``|lambda|`` lies in the window instead.
    dense_cap : int
        Largest admissible N.
    """
    N = model.N
    if N > dense_cap:
        raise SpectralError(f"N={N} exceeds the dense eigen-solver cap {dense_cap}")
    Z = np.zeros((N, N))
    B = np.block([[model.M, Z], [Z, model.M]])
    A = np.block([[-model.C, -model.K], [model.M, Z]])
    w, vl, vr = scipy.linalg.eig(A, B, left=True, right=True)
    scale = np.abs(w).max()
    if np.any(w.real > 1e-10 * scale):
        raise SpectralError(f"unstable eigenvalue (max Re lambda = {w.real.max():.3e})")
    order = np.argsort(-w.real, kind="stable")
    full = w[order]
    upper = [i for i in range(2 * N) if w[i].imag > 1e-12 * scale]
    upper.sort(key=lambda i: abs(w[i]))
    if window is not None:
        lo, hi = window
        sel = [i for i in upper if lo <= abs(w[i]) <= hi]
        master_idx = [upper.index(i) for i in sel]
    else:
        master_idx = _check_master(master if master is not None else [1], len(upper))
        sel = [upper[m] for m in master_idx]
    if not sel:
        raise SpectralError("no oscillatory mode selected")
    n = len(sel)
    lam = np.zeros(2 * n, dtype=complex)
    Y = np.zeros((2 * N, 2 * n), dtype=complex)
    X = np.zeros((2 * N, 2 * n), dtype=complex)
    for a, i in enumerate(sel):
        y = vr[:, i]
        yu = y[N:]
        j = int(np.argmax(np.abs(yu)))
        y = y * (abs(yu[j]) / yu[j]) / np.linalg.norm(yu)
        x = vl[:, i]
        s = np.conj(x) @ B @ y
        if abs(s) < 1e-10 * np.linalg.norm(x) * np.linalg.norm(y) * np.linalg.norm(B, 2):
            raise SpectralError(f"defective eigenvalue {w[i]:.6g}: left/right eigenvectors are B-orthogonal")
        x = x / np.conj(s)
        lam[a], lam[a + n] = w[i], np.conj(w[i])
        Y[:, a], Y[:, a + n] = y, np.conj(y)
        X[:, a], X[:, a + n] = x, np.conj(x)
    om = np.abs(lam[:n])
    xi = -lam[:n].real / om
    return MasterBasis(master_idx, lam, Y[N:], Y[:N], X[N:], X[:N], om, xi, "dense", None, full, Backend())


def eigen_residuals(model: MechModel, basis: MasterBasis) -> dict:
    """Relative residuals of the eigen-identities for every master column.

    Keys: ``right`` for ``(lam^2 M + lam C + K) Y^U``, ``velocity`` for
    ``Y^V - lam Y^U``, ``left_u`` for ``M X^U - (conj(lam) M + C) X^V``,
    ``left_v`` for ``(conj(lam)^2 M + conj(lam) C + K) X^V``, ``normalisation``
    for ``X^H B Y - I`` and, on the real-mode path, ``real_mode`` for
    ``(lam M + C) phi + conj(lam) M phi``.
    """
    be = basis.backend
    lam = be.to_complex(basis.lam)
    YU, YV = be.to_complex(basis.YU), be.to_complex(basis.YV)
    XU, XV = be.to_complex(basis.XU), be.to_complex(basis.XV)
    M, C, K = model.M, model.C, model.K
    res = {"right": 0.0, "velocity": 0.0, "left_u": 0.0, "left_v": 0.0}
    for k, l in enumerate(lam):
        sc = (abs(l) ** 2 * np.linalg.norm(M, 2) + abs(l) * np.linalg.norm(C, 2) + np.linalg.norm(K, 2))
        r = (l * l * M + l * C + K) @ YU[:, k]
        res["right"] = max(res["right"], np.linalg.norm(r) / (sc * np.linalg.norm(YU[:, k])))
        res["velocity"] = max(res["velocity"], np.linalg.norm(YV[:, k] - l * YU[:, k]) / np.linalg.norm(YV[:, k]))
        lb = np.conj(l)
        r = M @ XU[:, k] - (lb * M + C) @ XV[:, k]
        den = (abs(l) * np.linalg.norm(M, 2) + np.linalg.norm(C, 2)) * np.linalg.norm(XV[:, k])
        res["left_u"] = max(res["left_u"], np.linalg.norm(r) / den)
        r = (lb * lb * M + lb * C + K) @ XV[:, k]
        res["left_v"] = max(res["left_v"], np.linalg.norm(r) / (sc * np.linalg.norm(XV[:, k])))
    Z = np.zeros_like(M)
    B = np.block([[M, Z], [Z, M]])
    Y = np.vstack([YV, YU])
    X = np.vstack([XV, XU])
    res["normalisation"] = float(np.abs(X.conj().T @ B @ Y - np.eye(len(lam))).max())
    if basis.phi is not None:
        n = basis.n
        worst = 0.0
        for k in range(2 * n):
            ph = basis.phi[:, k % n]
            l = lam[k]
            r = (l * M + C) @ ph + np.conj(l) * (M @ ph)
            den = abs(l) * np.linalg.norm(M @ ph) + np.linalg.norm(C @ ph)
            worst = max(worst, np.linalg.norm(r) / den)
        res["real_mode"] = worst
    return {k: float(v) for k, v in res.items()}


def spectrum_report(basis: MasterBasis) -> str:
    """JSON listing of ``(lambda, omega, xi)`` for every computed mode."""
    full = basis.full_lambda if basis.full_lambda is not None else basis.lam_complex()
    modes = []
    for l in full:
        if l.imag < 0:
            continue
        w = abs(l)
        modes.append({
            "lambda": [float(l.real), float(l.imag)],
            "omega_rad": float(w),
            "omega_cycles": float(w / (2 * np.pi)),
            "xi": float(-l.real / w) if w > 0 else 0.0,
        })
    modes.sort(key=lambda d: d["omega_rad"])
    return json.dumps({"master": basis.to_dict(), "spectrum": modes}, indent=2)
