"""Harmonic balance with pseudo-arclength continuation and Hill stability.

Periodic solutions of ``M2 x'' + M1 x' + f(x, tau) = 0`` with ``tau = Omega t``
are expanded as ``x(tau) = c_0 + sum_k c_k cos(k tau) + s_k sin(k tau)``. The
nonlinear term is evaluated on ``n_fourier`` equispaced samples and
projected back (alternating frequency/time).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

log = logging.getLogger(__name__)

__all__ = [
    "ContinuationError",
    "HBProblem",
    "HarmonicBalance",
    "FRCBranch",
    "continue_branch",
    "hill_exponents",
    "periodic_max",
]


class ContinuationError(RuntimeError):
    """Raised when a periodic solution cannot be found or continued."""


@dataclass
class HBProblem:
    """Second-order (``M2`` nonzero) or first-order (``M2 = None``) periodic problem.

    ``f(x, tau, omega)`` maps ``x`` of shape ``(n, S)`` and ``tau`` of shape
    ``(S,)`` to ``(n, S)``; ``dfdx`` returns ``(n, n, S)``; the optional
    ``dfdomega`` returns ``(n, S)``.
    """

    n: int
    M1: np.ndarray
    f: Callable
    dfdx: Callable
    M2: Optional[np.ndarray] = None
    dfdomega: Optional[Callable] = None


class HarmonicBalance:
    """Fourier-Galerkin discretisation of an :class:`HBProblem`.

    Parameters
    ----------
    problem : HBProblem
    H : int
        Number of harmonics.
    n_fourier : int, optional
        Time samples per period; defaults to ``4 H + 3``.
    """

    def __init__(self, problem: HBProblem, H: int = 9, n_fourier: Optional[int] = None):
        if H < 1:
            raise ValueError("at least one harmonic is required")
        self.pb = problem
        self.H = H
        self.n_fourier = n_fourier or 4 * H + 3
        if self.n_fourier < 2 * H + 1:
            raise ValueError("n_fourier must be at least 2H + 1")
        S = self.n_fourier
        self.tau = 2 * np.pi * np.arange(S) / S
        nh = 2 * H + 1
        B = np.empty((S, nh))
        P = np.empty((nh, S))
        B[:, 0] = 1.0
        P[0] = 1.0 / S
        D = np.zeros((nh, nh))
        for k in range(1, H + 1):
            c, s = np.cos(k * self.tau), np.sin(k * self.tau)
            B[:, 2 * k - 1], B[:, 2 * k] = c, s
            P[2 * k - 1], P[2 * k] = 2 * c / S, 2 * s / S
            D[2 * k - 1, 2 * k] = k  # d/dtau of s_k sin -> k s_k cos
            D[2 * k, 2 * k - 1] = -k
        self.B, self.P, self.D = B, P, D
        self.nh = nh
        self.size = nh * problem.n
        self.L1 = np.kron(D, problem.M1)
        self.L2 = np.kron(D @ D, problem.M2) if problem.M2 is not None else None

    # -- coefficient helpers
    def coeffs(self, X: np.ndarray) -> np.ndarray:
        return X.reshape(self.nh, self.pb.n)

    def time_samples(self, X: np.ndarray, tau: Optional[np.ndarray] = None) -> np.ndarray:
        """``x(tau)`` with shape ``(n, S)``."""
        C = self.coeffs(X)
        if tau is None:
            return (self.B @ C).T
        Bt = np.empty((len(tau), self.nh))
        Bt[:, 0] = 1.0
        for k in range(1, self.H + 1):
            Bt[:, 2 * k - 1], Bt[:, 2 * k] = np.cos(k * tau), np.sin(k * tau)
        return (Bt @ C).T

    def from_samples(self, x: np.ndarray) -> np.ndarray:
        return (self.P @ x.T).ravel()

    def harmonic_amplitudes(self, X: np.ndarray) -> np.ndarray:
        C = self.coeffs(X)
        amp = np.empty((self.H + 1, self.pb.n))
        amp[0] = np.abs(C[0])
        for k in range(1, self.H + 1):
            amp[k] = np.hypot(C[2 * k - 1], C[2 * k])
        return amp

    # -- residual
    def residual(self, X: np.ndarray, omega: float) -> np.ndarray:
        x = self.time_samples(X)
        r = omega * (self.L1 @ X) + self.from_samples(self.pb.f(x, self.tau, omega))
        if self.L2 is not None:
            r = r + omega**2 * (self.L2 @ X)
        return r

    def jacobian(self, X: np.ndarray, omega: float) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(dR/dX, dR/dOmega)``."""
        x = self.time_samples(X)
        Jt = self.pb.dfdx(x, self.tau, omega)
        Jnl = np.einsum("hs,ijs,sk->hikj", self.P, Jt, self.B).reshape(self.size, self.size)
        JX = omega * self.L1 + Jnl
        JW = self.L1 @ X
        if self.L2 is not None:
            JX = JX + omega**2 * self.L2
            JW = JW + 2 * omega * (self.L2 @ X)
        if self.pb.dfdomega is not None:
            JW = JW + self.from_samples(self.pb.dfdomega(x, self.tau, omega))
        return JX, JW

    def solve_fixed(self, X0: np.ndarray, omega: float, tol: float = 1e-10, max_iter: int = 50) -> np.ndarray:
        """Newton iterations at fixed frequency."""
        X = X0.copy()
        for _ in range(max_iter):
            r = self.residual(X, omega)
            JX, _ = self.jacobian(X, omega)
            dX = np.linalg.solve(JX, -r)
            X = X + dX
            if np.linalg.norm(dX) <= tol * max(1.0, np.linalg.norm(X)) and np.linalg.norm(r) < 1e-6:
                if np.linalg.norm(self.residual(X, omega)) < tol * max(1.0, np.linalg.norm(X)) * 1e3:
                    return X
        raise ContinuationError(f"Newton did not converge at Omega={omega:.6g}")


def hill_exponents(hb: HarmonicBalance, X: np.ndarray, omega: float) -> np.ndarray:
    """Floquet exponents estimated with Hill's method.

    The eigenvalues of the Hill matrix come in families shifted by
    ``i k Omega``; the ``d`` members with the smallest imaginary parts are
    kept, ``d`` being the state dimension.
    """
    pb = hb.pb
    JX, _ = hb.jacobian(X, omega)
    n = pb.n
    Im = np.eye(hb.nh)
    if pb.M2 is None:
        A1 = np.kron(Im, pb.M1)
        if np.allclose(pb.M1, np.eye(n)):
            s = np.linalg.eigvals(-JX)
        else:
            s = scipy.linalg.eig(-JX, A1, right=False)
        d = n
    else:
        A1 = omega * 2 * np.kron(hb.D, pb.M2) + np.kron(Im, pb.M1)
        A2 = np.kron(Im, pb.M2)
        m = hb.size
        Z, I = np.zeros((m, m)), np.eye(m)
        s = scipy.linalg.eig(np.block([[Z, I], [-JX, -A1]]), np.block([[I, Z], [Z, A2]]), right=False)
        d = 2 * n
    s = s[np.isfinite(s)]
    idx = np.argsort(np.abs(s.imag), kind="stable")[:d]
    return s[idx]


@dataclass
class FRCBranch:
    """Frequency-response branch: one row per continuation point."""

    omega: np.ndarray
    amplitude: np.ndarray
    stable: np.ndarray
    fold: np.ndarray
    X: list = field(default_factory=list, repr=False)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.omega)

    def peak(self) -> tuple[float, float]:
        """Peak ``(Omega, amplitude)`` refined by a parabola through the maximum."""
        a, w = self.amplitude, self.omega
        if len(a) == 0:
            raise ValueError("empty branch")
        k = int(np.argmax(a))
        if 0 < k < len(a) - 1:
            ww, aa = w[k - 1 : k + 2], a[k - 1 : k + 2]
            # a refined peak may not rise above the samples by more than one step
            cap = a[k] + np.abs(np.diff(aa)).max()
            dw = np.diff(ww)
            balanced = dw[0] * dw[1] > 0 and max(abs(dw)) <= 4 * min(abs(dw))
            if balanced:
                c = np.polyfit(ww - w[k], aa, 2)
                if c[0] < 0:
                    x0 = -c[1] / (2 * c[0])
                    if min(ww - w[k]) <= x0 <= max(ww - w[k]) and np.polyval(c, x0) <= cap:
                        return float(w[k] + x0), float(np.polyval(c, x0))
            else:
                # near a turning point: parametrise by arclength
                s = np.concatenate([[0.0], np.cumsum(np.hypot(dw / max(abs(w[k]), 1e-300),
                                                             np.diff(aa) / max(a[k], 1e-300)))])
                ca, cw = np.polyfit(s, aa, 2), np.polyfit(s, ww, 2)
                if ca[0] < 0:
                    s0 = -ca[1] / (2 * ca[0])
                    if s[0] <= s0 <= s[2] and np.polyval(ca, s0) <= cap:
                        return float(np.polyval(cw, s0)), float(np.polyval(ca, s0))
        return float(w[k]), float(a[k])

    def fold_points(self) -> list:
        return [(float(self.omega[i]), float(self.amplitude[i])) for i in np.flatnonzero(self.fold)]

    def baseline(self) -> float:
        """Mean amplitude at the two ends of the branch."""
        return float(0.5 * (self.amplitude[0] + self.amplitude[-1]))

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["omega", "amplitude", "stable", "fold"])
            for om, a, st, fo in zip(self.omega, self.amplitude, self.stable, self.fold):
                w.writerow([repr(float(om)), repr(float(a)), "" if st is None else int(bool(st)), int(bool(fo))])
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "FRCBranch":
        rows = list(csv.DictReader(open(path)))
        om = np.array([float(r["omega"]) for r in rows])
        am = np.array([float(r["amplitude"]) for r in rows])
        st = np.array([None if r["stable"] == "" else bool(int(r["stable"])) for r in rows], dtype=object)
        fo = np.array([bool(int(r["fold"])) for r in rows])
        return cls(om, am, st, fo)


def continue_branch(hb: HarmonicBalance, window: tuple, X0: Optional[np.ndarray] = None,
                    amplitude: Optional[Callable] = None, stability: bool = True, ds: float = 0.01,
                    ds_min: float = 1e-6, ds_max: float = 0.05, max_steps: int = 5000, tol: float = 1e-9,
                    x_scale: Optional[float] = None, start: Optional[float] = None,
                    on_step: Optional[Callable] = None) -> FRCBranch:
    """Pseudo-arclength continuation in ``Omega`` across ``window``.

    Parameters
    ----------
    hb : HarmonicBalance
    window : (float, float)
        Frequency interval; the branch starts at ``window[0]`` (or ``start``)
        and stops once it leaves the interval.
    X0 : ndarray, optional
        Initial guess at the starting frequency (zero by default).
    amplitude : callable, optional
        ``amplitude(X, omega) -> float`` recorded per point; the maximum of
        the first state over the period by default.
    stability : bool
        Evaluate Hill exponents at every point.
    ds, ds_min, ds_max : float
        Initial, minimal and maximal step in scaled arclength. Frequencies
        are scaled by the window width and coefficients by ``x_scale``
        (default: the largest linearised response over the window).
    on_step : callable, optional
        ``on_step(X, omega) -> (hb, X)`` hook allowing the problem to be
        rebuilt between steps (used to refresh Omega-dependent models).
    """
    lo, hi = window
    if not lo < hi:
        raise ValueError("empty continuation window")
    w0 = lo if start is None else start
    X = np.zeros(hb.size) if X0 is None else np.asarray(X0, dtype=float).copy()
    X = hb.solve_fixed(X, w0)
    if amplitude is None:
        amplitude = lambda Xc, om: periodic_max(lambda tau: hb.time_samples(Xc, tau)[0])
    xs = x_scale or max(linear_scale(hb, window), np.linalg.norm(X), 1e-12)
    ws = hi - lo
    scale = np.concatenate([np.full(hb.size, xs), [ws]])

    Y = np.concatenate([X, [w0]]) / scale
    e = np.zeros(hb.size + 1)
    e[-1] = 1.0
    t = tangent_scaled(aug_jac_factory(hb, scale), Y, scale, e)
    pts_Y = [Y * scale]
    pts_t = [t]
    step = ds
    n_fail = 0
    for _ in range(max_steps):
        Yp = Y + step * t
        ok, Yn, iters = _correct(hb, Yp, t, scale, tol)
        if ok:
            tn = tangent_scaled(aug_jac_factory(hb, scale), Yn, scale, t)
            if float(tn @ t) < 0.9 and step > ds_min * 1.01:
                ok = False
        if not ok:
            step *= 0.5
            n_fail += 1
            if step < ds_min:
                log.warning("continuation stopped: step below minimum at Omega=%.6g", Y[-1] * scale[-1])
                break
            continue
        n_fail = 0
        Y, t = Yn, tn
        if on_step is not None:
            hb_new, Xn = on_step(Y[:-1] * scale[:-1], Y[-1] * scale[-1])
            if hb_new is not hb:
                hb = hb_new
                ok, Yc, _ = _correct(hb, np.concatenate([Xn, [Y[-1] * scale[-1]]]) / scale, t, scale, tol)
                if ok:
                    Y = Yc
                    t = tangent_scaled(aug_jac_factory(hb, scale), Y, scale, t)
        pts_Y.append(Y * scale)
        pts_t.append(t)
        if iters <= 3:
            step = min(step * 1.5, ds_max)
        elif iters >= 7:
            step = max(step * 0.6, ds_min)
        om = Y[-1] * scale[-1]
        if om < lo or om > hi:
            break
    else:
        log.warning("continuation reached the step limit before leaving the window")

    omega = np.array([y[-1] for y in pts_Y])
    Xs = [y[:-1] for y in pts_Y]
    amp = np.array([amplitude(x, w) for x, w in zip(Xs, omega)])
    dw = np.array([tt[-1] for tt in pts_t])
    fold = np.zeros(len(omega), dtype=bool)
    for i in range(1, len(omega)):
        if np.sign(dw[i]) != np.sign(dw[i - 1]) and dw[i] != 0:
            j = i if abs(dw[i]) < abs(dw[i - 1]) else i - 1
            fold[j] = True
    stable = np.array([None] * len(omega), dtype=object)
    if stability:
        for i, (x, w) in enumerate(zip(Xs, omega)):
            s = hill_exponents(hb, x, w)
            stable[i] = bool(np.all(s.real < 1e-7 * max(1.0, abs(w))))
    return FRCBranch(omega, amp, stable, fold, Xs, {"harmonics": hb.H, "n_fourier": hb.n_fourier,
                                                   "steps": len(omega), "x_scale": xs})


def periodic_max(signal: Callable, n_samples: int = 128) -> float:
    """Maximum of ``|signal(tau)|`` over one period.

    ``signal`` maps an array of phases to values; the best sample is refined
    by a bounded scalar search.
    """
    tau = 2 * np.pi * np.arange(n_samples) / n_samples
    y = np.abs(signal(tau))
    k = int(np.argmax(y))
    h = 2 * np.pi / n_samples
    res = minimize_scalar(lambda t: -abs(signal(np.array([t]))[0]), bounds=(tau[k] - h, tau[k] + h),
                          method="bounded", options={"xatol": 1e-12})
    return float(max(y[k], -res.fun))


def linear_scale(hb: HarmonicBalance, window: tuple, n_grid: int = 41) -> float:
    """Largest norm of the response linearised about ``X = 0`` over a frequency grid."""
    X0 = np.zeros(hb.size)
    best = 0.0
    for om in np.linspace(window[0], window[1], n_grid):
        JX, _ = hb.jacobian(X0, om)
        try:
            Xl = np.linalg.solve(JX, -hb.residual(X0, om))
        except np.linalg.LinAlgError:
            continue
        best = max(best, float(np.linalg.norm(Xl)))
    return best


def aug_jac_factory(hb: HarmonicBalance, scale: np.ndarray) -> Callable:
    def aug_jac(Y):
        JX, JW = hb.jacobian(Y[:-1], Y[-1])
        return np.column_stack([JX, JW]) * scale[None, :]

    return aug_jac


def tangent_scaled(aug_jac: Callable, Y: np.ndarray, scale: np.ndarray, prev: np.ndarray) -> np.ndarray:
    """Unit tangent in scaled variables, oriented along ``prev``."""
    J = aug_jac(Y * scale)
    A = np.vstack([J, prev[None, :]])
    rhs = np.zeros(A.shape[0])
    rhs[-1] = 1.0
    t = np.linalg.solve(A, rhs)
    return t / np.linalg.norm(t)


def _correct(hb: HarmonicBalance, Yp: np.ndarray, t: np.ndarray, scale: np.ndarray, tol: float,
             max_iter: int = 12):
    Y = Yp.copy()
    for it in range(1, max_iter + 1):
        X, w = Y[:-1] * scale[:-1], Y[-1] * scale[-1]
        r = hb.residual(X, w)
        JX, JW = hb.jacobian(X, w)
        J = np.column_stack([JX, JW]) * scale[None, :]
        A = np.vstack([J, t[None, :]])
        b = -np.concatenate([r, [t @ (Y - Yp)]])
        try:
            dY = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            return False, Y, it
        Y = Y + dY
        if not np.all(np.isfinite(Y)):
            return False, Y, it
        if np.linalg.norm(dY) < tol * max(1.0, np.linalg.norm(Y)):
            X, w = Y[:-1] * scale[:-1], Y[-1] * scale[-1]
            rn = np.linalg.norm(hb.residual(X, w))
            return rn < 1e-7 * max(1.0, np.linalg.norm(X)), Y, it
    return False, Y, max_iter
