"""Reference solutions: full-order harmonic balance, time integration and
first-order multiple-scales formulas for forced Duffing oscillators."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .continuation import FRCBranch, HBProblem, HarmonicBalance, continue_branch, periodic_max
from .model import MechModel, undamped_modes

log = logging.getLogger(__name__)

__all__ = [
    "HBConfig",
    "full_hb_problem",
    "hbm_full",
    "time_integrate_full",
    "DuffingMultipleScales",
    "modal_observable",
]


@dataclass(frozen=True)
class HBConfig:
    """Discretisation and continuation settings for the full-order oracle."""

    harmonics: int = 9
    n_fourier: Optional[int] = None
    ds: float = 0.01
    ds_max: float = 0.05
    max_steps: int = 5000
    stability: bool = False

    def samples(self) -> int:
        nf = self.n_fourier or 4 * self.harmonics + 3
        if nf < 4 * self.harmonics + 1:
            raise ValueError("n_fourier must be at least 4H + 1 to resolve cubic terms without aliasing")
        return nf


def modal_observable(model: MechModel, mode: int = 1) -> np.ndarray:
    """Row vector ``phi^T M`` extracting the modal coordinate of ``mode`` (1-based)."""
    _, phi = undamped_modes(model.M, model.K)
    return phi[:, mode - 1] @ model.M


def full_hb_problem(model: MechModel, F: np.ndarray) -> HBProblem:
    """``M x'' + C x' + K x + G(x,x) + H(x,x,x) = F cos(tau)``."""
    F = np.asarray(F, dtype=float)
    K = model.K

    def f(x, tau, om):
        return K @ x + model.G(x, x) + model.H(x, x, x) - F[:, None] * np.cos(tau)[None, :]

    def dfdx(x, tau, om):
        J = np.repeat(K[:, :, None], x.shape[1], axis=2)
        if model.G:
            J = J + model.G.jacobian(x)
        if model.H:
            J = J + model.H.jacobian(x)
        return J

    return HBProblem(model.N, model.C, f, dfdx, M2=model.M)


def _linear_guess(model: MechModel, F: np.ndarray, omega: float, hb: HarmonicBalance) -> np.ndarray:
    q = np.linalg.solve(model.K - omega**2 * model.M + 1j * omega * model.C, F)
    X = np.zeros(hb.size)
    C = X.reshape(hb.nh, model.N)
    C[1], C[2] = q.real, -q.imag
    return X


def hbm_full(model: MechModel, F: np.ndarray, window: tuple, config: HBConfig = HBConfig(),
             observable: Optional[np.ndarray] = None, scale: float = 1.0) -> FRCBranch:
    """Frequency response of the full model by harmonic balance continuation.

    Parameters
    ----------
    model : MechModel
    F : ndarray
        Forcing amplitude vector (the load is ``F cos(Omega t)``).
    window : (float, float)
    config : HBConfig
    observable : ndarray, optional
        Row applied to the displacement; first-mode modal coordinate by default.
    scale : float
        Factor applied to the recorded amplitude.
    """
    if observable is None:
        observable = modal_observable(model, 1)
    hb = HarmonicBalance(full_hb_problem(model, F), config.harmonics, config.samples())

    def amp(X, om):
        return periodic_max(lambda tau: observable @ hb.time_samples(X, tau)) * scale

    X0 = _linear_guess(model, F, window[0], hb)
    branch = continue_branch(hb, window, X0=X0, amplitude=amp, stability=config.stability, ds=config.ds,
                             ds_max=config.ds_max, max_steps=config.max_steps)
    branch.meta["source"] = "full-order harmonic balance"
    return branch


def time_integrate_full(model: MechModel, F: np.ndarray, omega: float, n_periods: int = 400,
                        measure_periods: int = 20, observable: Optional[np.ndarray] = None, scale: float = 1.0,
                        x0: Optional[np.ndarray] = None, rtol: float = 1e-9, atol: float = 1e-12,
                        settle_tol: float = 1e-3) -> float:
    """Steady amplitude of the full model from direct time integration.

    A warning is emitted when the amplitude over the last ``measure_periods``
    differs from the preceding window by more than ``settle_tol``.
    """
    if observable is None:
        observable = modal_observable(model, 1)
    N = model.N
    Minv = np.linalg.inv(model.M)
    F = np.asarray(F, dtype=float)

    def rhs(t, y):
        u, v = y[:N], y[N:]
        acc = Minv @ (F * np.cos(omega * t) - model.C @ v - model.internal_force(u))
        return np.concatenate([v, acc])

    T = 2 * np.pi / omega
    y0 = np.zeros(2 * N) if x0 is None else np.asarray(x0, dtype=float)
    t_end = n_periods * T
    t_eval = np.linspace(t_end - 2 * measure_periods * T, t_end, 2 * measure_periods * 64 + 1)
    sol = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853", rtol=rtol, atol=atol, t_eval=t_eval)
    if sol.status < 0:
        raise RuntimeError(f"time integration failed: {sol.message}")
    q = np.abs(observable @ sol.y[:N]) * scale
    half = len(t_eval) // 2
    a_prev, a_last = q[:half].max(), q[half:].max()
    if abs(a_last - a_prev) > settle_tol * max(a_last, 1e-300):
        warnings.warn(f"response not settled at Omega={omega:.6g}: {a_prev:.6g} vs {a_last:.6g}",
                      RuntimeWarning, stacklevel=2)
    return float(a_last)


@dataclass(frozen=True)
class DuffingMultipleScales:
    """First-order multiple-scales results for
    ``q'' + 2 xi w0 q' + w0^2 q + g q^2 + h q^3 = K cos(Omega t)``.
    """

    omega0: float
    xi: float
    g: float = 0.0
    h: float = 0.0

    @property
    def mu(self) -> float:
        return self.xi * self.omega0

    @property
    def gamma(self) -> float:
        """Backbone coefficient: ``omega = omega0 + gamma a^2``."""
        w = self.omega0
        return 3 * self.h / (8 * w) - 5 * self.g**2 / (12 * w**3)

    def backbone(self, a) -> np.ndarray:
        return self.omega0 + self.gamma * np.asarray(a) ** 2

    def fold_threshold(self) -> float:
        """Smallest forcing amplitude giving a multivalued primary response."""
        if self.gamma == 0:
            return np.inf
        F2 = 8 * self.mu**3 / (3 * np.sqrt(3) * abs(self.gamma))
        return float(2 * self.omega0 * np.sqrt(F2))

    @staticmethod
    def _positive_roots(coeffs) -> np.ndarray:
        r = np.roots(coeffs)
        r = r[np.abs(r.imag) <= 1e-9 * np.maximum(1.0, np.abs(r))].real
        return np.sort(np.sqrt(r[r > 0]))

    def primary(self, K: float, Omega: float) -> np.ndarray:
        """Amplitudes ``a`` solving ``a^2 [mu^2 + (s - G a^2)^2] = (K / 2 w0)^2``, ``s = Omega - w0``."""
        s, G, mu = Omega - self.omega0, self.gamma, self.mu
        F2 = (K / (2 * self.omega0)) ** 2
        return self._positive_roots([G**2, -2 * s * G, mu**2 + s**2, -F2])

    def superharmonic3_lambda(self, K: float, Omega: float) -> float:
        return K / (2 * (self.omega0**2 - Omega**2))

    def superharmonic3(self, K: float, Omega: float) -> np.ndarray:
        """Free-oscillation amplitudes near ``3 Omega = w0`` (cubic term only)."""
        w, h, mu = self.omega0, self.h, self.mu
        L = self.superharmonic3_lambda(K, Omega)
        s = 3 * Omega - w - 3 * h * L**2 / w
        c = 3 * h / (8 * w)
        rhs = (h * L**3 / w) ** 2
        return self._positive_roots([c**2, -2 * s * c, mu**2 + s**2, -rhs])

    def superharmonic3_peak(self, K: float) -> tuple[float, float]:
        """Forcing frequency and free amplitude at the 3:1 peak.

        The free amplitude is largest where the detuning bracket vanishes,
        giving ``a = h L^3 / (w0 mu)``; the frequency follows from a bounded
        search around that estimate.
        """
        w = self.omega0

        def neg(Om):
            a = self.superharmonic3(K, Om)
            return -a.max() if a.size else 0.0

        L = self.superharmonic3_lambda(K, w / 3)
        a_max = abs(self.h * L**3 / (w * self.mu))
        guess = (w + 3 * self.h * L**2 / w + 3 * self.h * a_max**2 / (8 * w)) / 3
        res = minimize_scalar(neg, bounds=(guess * 0.98, guess * 1.02), method="bounded", options={"xatol": 1e-12})
        return float(res.x), float(-res.fun)

    def superharmonic2(self, K: float, Omega) -> np.ndarray:
        """Free-oscillation amplitude near ``2 Omega = w0`` driven by the quadratic term."""
        Omega = np.asarray(Omega, dtype=float)
        L = K / (2 * (self.omega0**2 - Omega**2))
        s = 2 * Omega - self.omega0
        return np.abs(self.g) * L**2 / (self.omega0 * np.sqrt(self.mu**2 + s**2))
