"""Reduced-order model: evaluation, realification, integration and continuation.

The reduced dynamics lives on ``z = (z_1..z_n, conj(z_1)..conj(z_n))`` and is
driven by ``z+ = eps e^{i Omega t}``, ``z- = eps e^{-i Omega t}``. The real
state used for integration and harmonic balance is
``x = (Re z_1..Re z_n, Im z_1..Im z_n)``.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import solve_ivp

from .continuation import FRCBranch, HBProblem, HarmonicBalance, continue_branch, periodic_max
from .parametrisation import Parametrisation
from .polyalgebra import conjugate_index

log = logging.getLogger(__name__)

__all__ = [
    "SymmetryError",
    "PolynomialMap",
    "ReducedDynamics",
    "Trajectory",
    "realify",
    "reconstruct",
    "integrate",
    "continue_frc",
    "whisker_snapshot",
    "write_whisker_csv",
]


class SymmetryError(ValueError):
    """Coefficients are not conjugate-symmetric, so the realified field is not real."""


class PolynomialMap:
    """Vectorised evaluation of ``sum_a c_a z^a`` and its partial derivatives.

    Parameters
    ----------
    exps : ndarray of int, shape (T, nv)
    coef : ndarray of complex, shape (D, T)
    """

    def __init__(self, exps: np.ndarray, coef: np.ndarray):
        self.exps = np.asarray(exps, dtype=np.int64).reshape(-1, exps.shape[-1] if len(exps) else 0)
        self.coef = np.asarray(coef, dtype=complex)
        self.nv = self.exps.shape[1] if self.exps.size else 0
        self.emax = int(self.exps.max()) if self.exps.size else 0

    def _powers(self, z: np.ndarray) -> np.ndarray:
        P = np.ones((self.nv, self.emax + 1) + z.shape[1:], dtype=complex)
        for e in range(1, self.emax + 1):
            P[:, e] = P[:, e - 1] * z
        return P

    def monomials(self, z: np.ndarray) -> np.ndarray:
        """Values ``z^a`` with shape ``(T,) + z.shape[1:]``."""
        if not self.exps.size:
            return np.zeros((0,) + z.shape[1:], dtype=complex)
        P = self._powers(z)
        return np.prod(P[np.arange(self.nv)[None, :], self.exps], axis=1)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        if not self.exps.size:
            return np.zeros((self.coef.shape[0],) + z.shape[1:], dtype=complex)
        return np.tensordot(self.coef, self.monomials(z), axes=(1, 0))

    def jacobian(self, z: np.ndarray, cols: Sequence[int]) -> np.ndarray:
        """Partial derivatives with respect to ``z[cols]``: shape ``(D, len(cols)) + z.shape[1:]``."""
        out = np.zeros((self.coef.shape[0], len(cols)) + z.shape[1:], dtype=complex)
        if not self.exps.size:
            return out
        P = self._powers(z)
        idx = np.arange(self.nv)[None, :]
        for c, k in enumerate(cols):
            ek = self.exps[:, k]
            mask = ek > 0
            if not mask.any():
                continue
            red = self.exps[mask].copy()
            red[:, k] -= 1
            mono = np.prod(P[idx, red], axis=1) * ek[mask].reshape((-1,) + (1,) * (z.ndim - 1))
            out[:, c] = np.tensordot(self.coef[:, mask], mono, axes=(1, 0))
        return out


@dataclass
class Trajectory:
    """Time history of the realified reduced state."""

    t: np.ndarray
    x: np.ndarray

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        n = self.x.shape[0] // 2
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"{c}{k + 1}" for k in range(n) for c in ("x", "y")])
            for i, t in enumerate(self.t):
                row = [repr(float(t))]
                for k in range(n):
                    row += [repr(float(self.x[k, i])), repr(float(self.x[n + k, i]))]
                w.writerow(row)
        return path

    def steady_amplitude(self, period: float, n_periods: int = 5, component: int = 0) -> float:
        tail = self.t >= self.t[-1] - n_periods * period
        return float(np.max(np.abs(self.x[component, tail])))


class ReducedDynamics:
    """Polynomial reduced dynamics and mappings of a parametrisation.

    Parameters
    ----------
    param : Parametrisation
    symmetry_tol : float
        Largest admissible relative violation of conjugate symmetry.
    """

    def __init__(self, param: Parametrisation, symmetry_tol: float = 1e-9):
        self.param = param
        self.n = param.n
        self.nv = param.n_vars
        self.omega0 = param.omega
        terms = param.reduced_terms()
        self._check_symmetry(terms, symmetry_tol)
        n = self.n
        if terms:
            exps = np.array([a for a, _ in terms])
            coef = np.array([f[:n] for _, f in terms]).T
        else:
            exps = np.zeros((0, self.nv), dtype=np.int64)
            coef = np.zeros((n, 0), dtype=complex)
        self.f = PolynomialMap(exps, coef)
        mt = param.mapping_terms()
        mexps = np.array([a for a, _, _ in mt])
        self.U = PolynomialMap(mexps, np.array([p for _, p, _ in mt]).T)
        self.V = PolynomialMap(mexps, np.array([v for _, _, v in mt]).T)

    def _check_symmetry(self, terms, tol):
        n = self.n
        table = {a: f for a, f in terms}
        scale = max((np.abs(f).max() for _, f in terms), default=1.0)
        worst = 0.0
        for a, f in terms:
            c = conjugate_index(a, n)
            g = table.get(c, np.zeros_like(f))
            worst = max(worst, float(np.abs(np.roll(g, n) - np.conj(f)).max()))
        if worst > tol * scale:
            raise SymmetryError(f"reduced dynamics violates conjugate symmetry by {worst:.3e}")
        self.symmetry_defect = worst

    # -- coordinates
    def augment(self, zbar: np.ndarray, tau, eps: float) -> np.ndarray:
        """``(zbar, conj(zbar), eps e^{i tau}, eps e^{-i tau})`` for ``zbar`` of shape ``(n, ...)``."""
        zbar = np.asarray(zbar, dtype=complex)
        tau = np.asarray(tau, dtype=float)
        shape = np.broadcast_shapes(zbar.shape[1:], tau.shape)
        z = np.empty((self.nv,) + shape, dtype=complex)
        z[: self.n] = np.broadcast_to(zbar, (self.n,) + shape)
        z[self.n : 2 * self.n] = np.conj(z[: self.n])
        z[-2] = eps * np.exp(1j * tau)
        z[-1] = eps * np.exp(-1j * tau)
        return z

    @staticmethod
    def to_complex(x: np.ndarray) -> np.ndarray:
        n = x.shape[0] // 2
        return x[:n] + 1j * x[n:]

    # -- fields
    def eval_field(self, zbar, t: float, omega: float, eps: float) -> np.ndarray:
        """Complex reduced velocity for all 2n master coordinates."""
        zbar = np.asarray(zbar, dtype=complex).reshape(self.n)
        z = self.augment(zbar[:, None], np.array([omega * t]), eps)
        zd = self.f(z)[:, 0]
        return np.concatenate([zd, np.conj(zd)])

    def real_field(self, x: np.ndarray, tau, eps: float) -> np.ndarray:
        """Realified field; ``x`` has shape ``(2n,)`` or ``(2n, S)``."""
        z = self.augment(self.to_complex(x), tau, eps)
        zd = self.f(z)
        return np.concatenate([zd.real, zd.imag])

    def real_jacobian(self, x: np.ndarray, tau, eps: float) -> np.ndarray:
        n = self.n
        z = self.augment(self.to_complex(x), tau, eps)
        d = self.f.jacobian(z, list(range(2 * n)))
        dx = d[:, :n] + d[:, n:]
        dy = 1j * (d[:, :n] - d[:, n:])
        top = np.concatenate([dx.real, dy.real], axis=1)
        bot = np.concatenate([dx.imag, dy.imag], axis=1)
        return np.concatenate([top, bot], axis=0)

    def reconstruct(self, zbar, tau, eps: float) -> tuple[np.ndarray, np.ndarray]:
        """Physical displacement and velocity ``(U, V)`` (real parts)."""
        z = self.augment(np.asarray(zbar, dtype=complex), tau, eps)
        return self.U(z).real, self.V(z).real

    def linear_eigenvalues(self) -> np.ndarray:
        J = self.real_jacobian(np.zeros(2 * self.n), 0.0, 0.0)
        return np.linalg.eigvals(J)

    # -- harmonic balance
    def hb_problem(self, eps: float) -> HBProblem:
        m = 2 * self.n
        f = lambda x, tau, om: -self.real_field(x, tau, eps)
        dfdx = lambda x, tau, om: -self.real_jacobian(x, tau, eps)
        return HBProblem(m, np.eye(m), f, dfdx)


def realify(param: Parametrisation) -> ReducedDynamics:
    """Real vector field of the reduced dynamics (raises :class:`SymmetryError`)."""
    return ReducedDynamics(param)


def reconstruct(param: Parametrisation, zbar, t: float, omega: float, eps: float):
    """``(U, V)`` at reduced state ``zbar`` and time ``t``."""
    rom = param if isinstance(param, ReducedDynamics) else ReducedDynamics(param)
    zb = np.asarray(zbar, dtype=complex).reshape(rom.n, 1)
    U, V = rom.reconstruct(zb, np.array([omega * t]), eps)
    return U[:, 0], V[:, 0]


def integrate(rom: ReducedDynamics, x0, t_span: tuple, omega: float, eps: float, rtol: float = 1e-9,
              atol: float = 1e-12, max_step: float = np.inf, t_eval=None, method: str = "RK45") -> Trajectory:
    """Adaptive explicit integration of the realified reduced dynamics."""
    fun = lambda t, x: rom.real_field(x, omega * t, eps)
    sol = solve_ivp(fun, t_span, np.asarray(x0, dtype=float), method=method, rtol=rtol, atol=atol,
                    max_step=max_step, t_eval=t_eval)
    if sol.status < 0:
        raise RuntimeError(f"integration failed: {sol.message}")
    return Trajectory(sol.t, sol.y)


def _amplitude_fn(rom: ReducedDynamics, hb: HarmonicBalance, eps: float, observable, scale: float) -> Callable:
    def amp(X, om):
        def signal(tau):
            U, _ = rom.reconstruct(rom.to_complex(hb.time_samples(X, tau)), tau, eps)
            return observable @ U

        return periodic_max(signal) * scale

    return amp


def continue_frc(rom: ReducedDynamics, window: tuple, eps: float = 1.0, H: int = 9,
                 observable: Optional[np.ndarray] = None, scale: float = 1.0, n_fourier: Optional[int] = None,
                 stability: bool = True, rebuild: Optional[Callable] = None, **kwargs) -> FRCBranch:
    """Frequency response of the reduced model by harmonic balance.

    Parameters
    ----------
    rom : ReducedDynamics
    window : (float, float)
        Forcing frequency interval.
    eps : float
        Forcing level multiplying the forcing shape used in the parametrisation.
    H : int
        Number of harmonics.
    observable : ndarray, optional
        Row vector applied to the reconstructed displacement; defaults to the
        first master mode's modal coordinate ``phi^T M U`` when available.
    scale : float
        Multiplies the observable (``phi_max / L_CH`` for normalised output).
    rebuild : callable, optional
        ``rebuild(omega) -> ReducedDynamics`` refreshing the coefficients at
        each continuation step.
    """
    if observable is None:
        observable = np.zeros(rom.param.N)
        observable[0] = 1.0
    deg = int(rom.f.exps.sum(axis=1).max()) if rom.f.exps.size else 1
    nf = n_fourier or max(4 * H + 3, (deg + 1) * H + 1)
    hb = HarmonicBalance(rom.hb_problem(eps), H, nf)
    state = {"rom": rom}
    amp = _amplitude_fn(rom, hb, eps, observable, scale)
    on_step = None
    if rebuild is not None:
        def on_step(X, om):
            new = rebuild(om)
            state["rom"] = new
            return HarmonicBalance(new.hb_problem(eps), H, nf), X

    if eps == 0:
        omega = np.linspace(window[0], window[1], 11)
        z = np.zeros_like(omega)
        return FRCBranch(omega, z, np.array([True] * len(omega), dtype=object), np.zeros(len(omega), bool),
                         [np.zeros(hb.size)] * len(omega), {"harmonics": H, "trivial": True})
    branch = continue_branch(hb, window, amplitude=amp, stability=stability, on_step=on_step, **kwargs)
    branch.meta["eps"] = eps
    return branch


def whisker_snapshot(rom: ReducedDynamics, phase: float, re_grid, im_grid, eps: float,
                     observable: np.ndarray, validity_radius: Optional[float] = None) -> np.ndarray:
    """Slave coordinate over a grid of the first master coordinate at fixed forcing phase.

    Returns an array of rows ``(re_z, im_z, slave_value)``.
    """
    if rom.n != 1:
        raise ValueError("whisker snapshots need a single master mode")
    R, I = np.meshgrid(np.asarray(re_grid, float), np.asarray(im_grid, float), indexing="ij")
    zb = (R + 1j * I).reshape(1, -1)
    if validity_radius is not None and np.abs(zb).max() > validity_radius:
        warnings.warn(f"whisker grid extends to |z|={np.abs(zb).max():.3g} beyond the validity radius "
                      f"{validity_radius:.3g}", RuntimeWarning, stacklevel=2)
    U, _ = rom.reconstruct(zb, np.full(zb.shape[1], phase), eps)
    vals = np.asarray(observable) @ U
    return np.column_stack([R.ravel(), I.ravel(), vals])


def write_whisker_csv(path: Union[str, Path], snapshots: Sequence[tuple]) -> Path:
    """Write ``(phase_index, phase, rows)`` snapshots to one CSV."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re_z", "im_z", "slave_value", "phase_index", "phase"])
        for k, phase, rows in snapshots:
            for r in rows:
                w.writerow([repr(float(r[0])), repr(float(r[1])), repr(float(r[2])), k, repr(float(phase))])
    return path
