"""Evaluation of the parametrisation and of its invariance defect."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .core import Parametrisation

__all__ = ["full_coordinates", "evaluate", "invariance_residual", "residual_slope"]


def full_coordinates(param: Parametrisation, zbar, phase: float = 0.0, eps: float = 0.0):
    """Augmented coordinates ``(zbar, conj(zbar), eps e^{i phase}, eps e^{-i phase})``."""
    be = param.backend
    zbar = be.asarray(np.atleast_1d(zbar))
    if zbar.shape != (param.n,):
        raise ValueError(f"expected {param.n} master amplitudes, got shape {zbar.shape}")
    zp = be.scalar(eps) * be.exp(be.scalar(1j * phase))
    zm = be.scalar(eps) * be.exp(be.scalar(-1j * phase))
    z = be.zeros(param.n_vars)
    z[: param.n] = zbar
    z[param.n : 2 * param.n] = np.conj(zbar)
    z[-2], z[-1] = zp, zm
    return z


def _monomial(z, alpha):
    v = 1
    for zk, a in zip(z, alpha):
        if a:
            v = v * zk**a
    return v


def evaluate(param: Parametrisation, z):
    """Return ``(U, V, zdot)`` at augmented coordinates ``z``.

    ``zdot`` has length ``2n + 2``; the trailing entries are the imposed
    forcing-variable dynamics ``+-i Omega z+-``.
    """
    be = param.backend
    N, n2 = param.N, 2 * param.n
    U, V = be.zeros(N), be.zeros(N)
    zdot = be.zeros(n2 + 2)
    for a in param.order:
        e = param.entries[a]
        m = _monomial(z, a)
        U = U + e.psi * m
        V = V + e.ups * m
        zdot[:n2] = zdot[:n2] + e.f * m
    zdot[n2] = 1j * param.omega * z[n2]
    zdot[n2 + 1] = -1j * param.omega * z[n2 + 1]
    return U, V, zdot


def _directional(param: Parametrisation, z, zdot):
    be = param.backend
    N = param.N
    dU, dV = be.zeros(N), be.zeros(N)
    for a in param.order:
        e = param.entries[a]
        d = 0
        for s, a_s in enumerate(a):
            if not a_s or zdot[s] == 0:
                continue
            b = list(a)
            b[s] -= 1
            d = d + a_s * _monomial(z, b) * zdot[s]
        dU = dU + e.psi * d
        dV = dV + e.ups * d
    return dU, dV


def invariance_residual(param: Parametrisation, model, samples: Iterable[Sequence]) -> np.ndarray:
    """Norm of ``B dW/dz f - A W - Q(W) - forcing`` at each sample.

    Parameters
    ----------
    param : Parametrisation
    model : MechModel
    samples : iterable of (zbar, phase, eps)

    Returns
    -------
    ndarray of float
    """
    be = param.backend
    out = []
    with be.context():
        M = be.real_matrix(model.M)
        C = be.real_matrix(model.C)
        K = be.real_matrix(model.K)
        E = be.asarray(param.E)
        for zbar, phase, eps in samples:
            z = full_coordinates(param, zbar, phase, eps)
            U, V, zdot = evaluate(param, z)
            dU, dV = _directional(param, z, zdot)
            forcing = E * (z[-2] + z[-1])
            r1 = M @ dV - (-(C @ V) - K @ U - model.G(U, U) - model.H(U, U, U) + forcing)
            r2 = M @ dU - M @ V
            out.append(float(np.sqrt(be.norm(r1) ** 2 + be.norm(r2) ** 2)))
    return np.array(out)


def residual_slope(rho, res) -> float:
    """Least-squares slope of ``log(res)`` against ``log(rho)``."""
    rho, res = np.asarray(rho, float), np.asarray(res, float)
    return float(np.polyfit(np.log(rho), np.log(res), 1)[0])
