"""Order-by-order solution of the homological equations.

Coordinates are ``z = (z_1..z_n, conj(z_1)..conj(z_n), z+, z-)`` where the
forcing variables obey ``z+' = i Omega z+`` and ``z-' = -i Omega z-``. The
displacement and velocity mappings are ``U = sum Psi^a z^a`` and
``V = sum Ups^a z^a``; the reduced dynamics is ``z_r' = sum f_r^a z^a`` for
the 2n master coordinates only.

For each monomial ``a`` with eigenvalue combination ``sigma`` and resonant
set ``R`` the unknowns ``(Psi, f_R)`` solve the bordered system::

    [ sigma^2 M + sigma C + K        [(sigma + lam_r) M + C] Y^U_r ] [Psi]   [Xi         ]
    [ X^V_r^H [(sigma + lam_r) M + C]   X^V_r^H M Y^U_s            ] [f_R] = [X^V_r^H M mu]

with ``Xi = nu + (sigma M + C) mu``, after which
``Ups = sigma Psi + sum_r f_r Y^U_r - mu``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Optional

import numpy as np

from ..model import MechModel
from ..numerics import Backend, SingularMatrixError
from ..polyalgebra import TruncationRule, forcing_order, monomials_of_order, truncation_keep, unit
from ..spectral import MasterBasis

log = logging.getLogger(__name__)

__all__ = [
    "STYLES",
    "ParametrisationError",
    "Entry",
    "ResonanceSet",
    "Parametrisation",
    "Engine",
    "sigma",
    "resonance_set",
    "compute_parametrisation",
]

STYLES = ("graph", "cnf", "rnf")


class ParametrisationError(RuntimeError):
    """Raised when a homological equation cannot be solved."""


@dataclass
class Entry:
    """Coefficients attached to one monomial."""

    psi: np.ndarray
    ups: np.ndarray
    f: np.ndarray
    sigma: complex = 0.0
    R: tuple = ()


@dataclass
class ResonanceSet:
    """Resonant master indices (0-based) of one monomial with their reasons."""

    alpha: tuple
    sigma: complex
    members: tuple = ()
    reasons: tuple = ()
    damping_flag: bool = False

    def as_dict(self) -> dict:
        return {
            "alpha": list(self.alpha),
            "sigma": [float(np.real(self.sigma)), float(np.imag(self.sigma))],
            "members": [m + 1 for m in self.members],
            "reasons": list(self.reasons),
            "damping_flag": self.damping_flag,
        }


@dataclass
class Parametrisation:
    """Mapping and reduced-dynamics coefficients keyed by exponent tuple."""

    style: str
    rule: TruncationRule
    basis: MasterBasis
    omega: float
    E: np.ndarray
    entries: dict = field(default_factory=dict)
    order: list = field(default_factory=list)
    log: list = field(default_factory=list)
    legacy_forcing: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    eta: float = 0.1

    @property
    def n(self) -> int:
        return self.basis.n

    @property
    def N(self) -> int:
        return self.basis.N

    @property
    def n_vars(self) -> int:
        return 2 * self.basis.n + 2

    @property
    def backend(self) -> Backend:
        return self.basis.backend

    def reduced_terms(self, include_legacy: bool = True) -> list:
        """``(alpha, f)`` pairs with nonzero reduced-dynamics coefficients, complex128."""
        be = self.backend
        out = []
        for a in self.order:
            f = be.to_complex(self.entries[a].f)
            if np.any(f != 0):
                out.append((a, f))
        if include_legacy:
            for a, f in self.legacy_forcing.items():
                f = be.to_complex(f)
                if np.any(f != 0):
                    out.append((a, f))
        return out

    def mapping_terms(self) -> list:
        """``(alpha, Psi, Ups)`` triples as complex128 arrays."""
        be = self.backend
        return [(a, be.to_complex(self.entries[a].psi), be.to_complex(self.entries[a].ups)) for a in self.order]

    def coefficient(self, alpha) -> Entry:
        return self.entries[tuple(alpha)]

    def forcing_monomials(self) -> list:
        return [a for a in self.order if forcing_order(a) > 0]


def sigma(alpha, lam, omega: float):
    """``sum_s alpha_s lam_s + (alpha_+ - alpha_-) i Omega``."""
    n2 = len(lam)
    s = 0
    for k in range(n2):
        if alpha[k]:
            s = s + alpha[k] * lam[k]
    return s + (alpha[n2] - alpha[n2 + 1]) * 1j * omega


def resonance_set(alpha, basis: MasterBasis, omega: float, style: str, eta: float = 0.1) -> ResonanceSet:
    """Resonant master coordinates of monomial ``alpha``.

    Normal-form styles use ``|Im sigma - Im lam_r| <= eta |Im lam_r|``;
    trivial resonances (net exponent ``e_r`` with balanced forcing powers)
    are detected from the exponents alone. The real normal form closes the
    set under conjugation. The graph style takes every master coordinate.
    """
    if eta <= 0:
        raise ValueError(f"resonance tolerance must be positive, got {eta}")
    style = style.lower()
    if style not in STYLES:
        raise ValueError(f"unknown style {style!r}")
    n = basis.n
    lam = basis.lam_complex()
    sig = complex(sigma(alpha, lam, omega))
    if style == "graph":
        return ResonanceSet(tuple(alpha), sig, tuple(range(2 * n)), ("graph-forced",) * (2 * n))
    net = [alpha[j] - alpha[j + n] for j in range(n)]
    balanced = alpha[2 * n] == alpha[2 * n + 1]
    members, reasons = [], []
    flag = False
    for r in range(2 * n):
        j = r % n
        sign = 1 if r < n else -1
        target = [0] * n
        target[j] = sign
        if balanced and net == target:
            members.append(r)
            reasons.append("exact-trivial")
        elif abs(sig.imag - lam[r].imag) <= eta * abs(lam[r].imag):
            members.append(r)
            reasons.append("near-resonant")
        else:
            continue
        if abs(sig.real - lam[r].real) > eta * abs(lam[r]):
            flag = True
    if style == "rnf":
        for r in list(members):
            partner = r + n if r < n else r - n
            if partner not in members:
                members.append(partner)
                reasons.append("conjugate-closure")
    order = np.argsort(members, kind="stable")
    return ResonanceSet(tuple(alpha), sig, tuple(members[i] for i in order), tuple(reasons[i] for i in order), flag)


class Engine:
    """Stateful solver for one parametrisation.

    Parameters
    ----------
    model : MechModel
    basis : MasterBasis
    E : array_like
        Forcing shape ``E+ = E-`` (length N).
    omega : float
        Forcing frequency entering ``sigma``.
    style : {"graph", "cnf", "rnf"}
    rule : TruncationRule
    eta : float
        Relative resonance tolerance.
    solver : {"bordered", "cnf", "modal"}
        Linear solution method per monomial. ``"cnf"`` is the single-master
        real-mode fast path, ``"modal"`` the full eigenbasis projection.
    """

    def __init__(self, model: MechModel, basis: MasterBasis, E, omega: float, style: str = "cnf",
                 rule: Optional[TruncationRule] = None, eta: float = 0.1, solver: str = "bordered",
                 full_basis=None):
        self.model = model
        self.basis = basis
        self.be = basis.backend
        self.style = style.lower()
        if self.style not in STYLES:
            raise ValueError(f"unknown style {style!r}")
        self.rule = rule or TruncationRule("coupled", 3, 1)
        self.eta = eta
        self.omega = float(omega)
        self.solver = solver
        be = self.be
        self.n = basis.n
        self.N = model.N
        self.n_vars = 2 * self.n + 2
        with be.context():
            self.M = be.real_matrix(model.M)
            self.C = be.real_matrix(model.C)
            self.K = be.real_matrix(model.K)
            self.E = be.asarray(np.asarray(E, dtype=float))
            self.lam = basis.lam
            self.YU, self.YV = basis.YU, basis.YV
            self.XVh = np.conj(basis.XV).T
            self.XVhM = self.XVh @ self.M
            self.MYU = self.M @ self.YU
        self._cache: dict = {}
        self.full_basis = full_basis
        self.param = Parametrisation(self.style, self.rule, basis, self.omega, np.asarray(E, dtype=float), eta=eta)
        self._f_by_order: dict = {}
        self.max_check = 0.0

    # ------------------------------------------------------------------ rhs
    def _stored(self, alpha):
        return self.param.entries.get(alpha)

    def _divisors(self, alpha):
        ranges = [range(a + 1) for a in alpha]
        p = sum(alpha)
        for beta in product(*ranges):
            s = sum(beta)
            if 0 < s < p:
                yield beta

    def assemble_rhs(self, alpha) -> tuple:
        """Return ``(nu, mu)`` for monomial ``alpha`` from already stored entries."""
        be = self.be
        N = self.N
        p = sum(alpha)
        n2 = 2 * self.n
        nu = be.zeros(N)
        NV = be.zeros(N)
        NU = be.zeros(N)
        if p == 1 and alpha[n2] + alpha[n2 + 1] == 1:
            nu = nu + self.E
        G, H = self.model.G, self.model.H
        if p >= 2 and G:
            left, right, wts = [], [], []
            for beta in self._divisors(alpha):
                gamma = tuple(a - b for a, b in zip(alpha, beta))
                if beta > gamma:
                    continue
                eb, eg = self._stored(beta), self._stored(gamma)
                if eb is None or eg is None:
                    continue
                left.append(eb.psi)
                right.append(eg.psi)
                wts.append(1.0 if beta == gamma else 2.0)
            if left:
                out = G(np.column_stack(left), np.column_stack(right))
                nu = nu - out @ np.array(wts, dtype=out.dtype)
        if p >= 3 and H:
            a_, b_, c_, wts = [], [], [], []
            for beta in self._divisors(alpha):
                rest = tuple(a - b for a, b in zip(alpha, beta))
                for gamma in self._divisors(rest):
                    if not beta <= gamma:
                        continue
                    delta = tuple(r - g for r, g in zip(rest, gamma))
                    if not gamma <= delta:
                        continue
                    e1, e2, e3 = self._stored(beta), self._stored(gamma), self._stored(delta)
                    if e1 is None or e2 is None or e3 is None:
                        continue
                    if beta == gamma == delta:
                        w = 1.0
                    elif beta == gamma or gamma == delta:
                        w = 3.0
                    else:
                        w = 6.0
                    a_.append(e1.psi)
                    b_.append(e2.psi)
                    c_.append(e3.psi)
                    wts.append(w)
            if a_:
                out = H(np.column_stack(a_), np.column_stack(b_), np.column_stack(c_))
                nu = nu - out @ np.array(wts, dtype=out.dtype)
        if p >= 2:
            # reduced dynamics driven by the forcing at order one
            for c in (n2, n2 + 1):
                if not alpha[c]:
                    continue
                fe = self._stored(unit(c, self.n_vars))
                if fe is None:
                    continue
                for s in range(n2):
                    fs = fe.f[s]
                    if fs == 0:
                        continue
                    beta = list(alpha)
                    beta[c] -= 1
                    beta[s] += 1
                    beta = tuple(beta)
                    eb = self._stored(beta)
                    if eb is None:
                        if truncation_keep(beta, self.rule):
                            raise ParametrisationError(f"ordering violation: {beta} needed by {alpha} not yet solved")
                        continue
                    NV = NV + (beta[s] * fs) * eb.ups
                    NU = NU + (beta[s] * fs) * eb.psi
            # reduced dynamics of intermediate orders
            for pf in range(2, p):
                for gamma, fg, nz in self._f_by_order.get(pf, ()):
                    for s in nz:
                        beta = [a + (1 if k == s else 0) - g for k, (a, g) in enumerate(zip(alpha, gamma))]
                        if min(beta) < 0 or beta[s] < 1:
                            continue
                        eb = self._stored(tuple(beta))
                        if eb is None:
                            continue
                        coef = beta[s] * fg[s]
                        NV = NV + coef * eb.ups
                        NU = NU + coef * eb.psi
        nu = nu - self.M @ NV
        mu = -NU
        return nu, mu

    # --------------------------------------------------------------- solves
    def _factor(self, sig, R):
        key = (str(sig), R)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        be = self.be
        N, m = self.N, len(R)
        A = be.zeros((N + m, N + m))
        A[:N, :N] = sig * sig * self.M + sig * self.C + self.K
        for i, r in enumerate(R):
            Br = (sig + self.lam[r]) * self.M + self.C
            A[:N, N + i] = Br @ self.YU[:, r]
            A[N + i, :N] = self.XVh[r] @ Br
            for j, s in enumerate(R):
                A[N + i, N + j] = self.XVhM[r] @ self.YU[:, s]
        try:
            lu = be.factor(A)
        except SingularMatrixError as exc:
            lam = self.basis.lam_complex()
            s = complex(sig)
            dist = ", ".join(f"lambda_{r + 1}: |Im(sigma - lambda)|={abs(s.imag - lam[r].imag):.3e}" for r in range(len(lam)))
            raise ParametrisationError(
                f"singular homological system at sigma={s:.6g} with R={[r + 1 for r in R]} ({exc}); {dist}"
            ) from None
        self._cache[key] = lu
        return lu

    def solve_orderp(self, alpha, nu, mu, res: ResonanceSet):
        """Solve one homological equation; returns ``(Psi, Ups, f)``."""
        if self.solver == "cnf":
            from .oracles import cnf_single_master_solve

            return cnf_single_master_solve(self, alpha, nu, mu, res)
        if self.solver == "modal":
            from .oracles import modal_oracle_solve

            return modal_oracle_solve(self, alpha, nu, mu, res)
        be = self.be
        N = self.N
        sig = sigma(alpha, self.lam, self.omega)
        R = res.members
        Xi = nu + (sig * self.M + self.C) @ mu
        rhs = be.zeros(N + len(R))
        rhs[:N] = Xi
        for i, r in enumerate(R):
            rhs[N + i] = self.XVhM[r] @ mu
        sol = self._factor(sig, R).solve(rhs)
        psi = np.asarray(sol[:N])
        f = be.zeros(2 * self.n)
        for i, r in enumerate(R):
            f[r] = sol[N + i]
        ups = sig * psi - mu
        for r in R:
            ups = ups + f[r] * self.YU[:, r]
        # projection identity for the resonant reduced-dynamics coefficients
        for r in R:
            ref = self.XVh[r] @ (nu + (self.lam[r] * self.M + self.C) @ mu)
            scale = max(abs(complex(ref)), be.norm(Xi) * be.norm(self.XVh[r]), 1e-300)
            self.max_check = max(self.max_check, abs(complex(f[r] - ref)) / scale)
        return psi, ups, f

    # --------------------------------------------------------------- driver
    def _store(self, alpha, psi, ups, f, sig, R):
        self.param.entries[alpha] = Entry(psi, ups, f, sig, R)
        self.param.order.append(alpha)
        nz = tuple(s for s in range(2 * self.n) if f[s] != 0)
        p = sum(alpha)
        if nz and p >= 2:
            self._f_by_order.setdefault(p, []).append((alpha, f, nz))

    def solve_master_linear(self, s: int):
        alpha = unit(s, self.n_vars)
        f = self.be.zeros(2 * self.n)
        f[s] = self.lam[s]
        res = ResonanceSet(alpha, complex(self.basis.lam_complex()[s]), (s,), ("exact-trivial",))
        self.param.log.append(res)
        self._store(alpha, self.YU[:, s].copy(), self.YV[:, s].copy(), f, self.lam[s], (s,))

    def run(self, reuse: Optional[Parametrisation] = None, progress: Optional[Callable] = None) -> Parametrisation:
        """Solve every kept monomial in processing order.

        Parameters
        ----------
        reuse : Parametrisation, optional
            Previously computed parametrisation whose forcing-free entries
            are copied instead of recomputed.
        """
        rule = self.rule
        stats = {"orders": {}, "max_projection_mismatch": 0.0}
        t_all = time.perf_counter()
        with self.be.context():
            for p in range(1, rule.max_order + 1):
                t0 = time.perf_counter()
                count = 0
                for alpha in monomials_of_order(p, self.n_vars):
                    if not truncation_keep(alpha, rule):
                        continue
                    count += 1
                    fo = forcing_order(alpha)
                    if reuse is not None and fo == 0 and alpha in reuse.entries:
                        e = reuse.entries[alpha]
                        self._store(alpha, e.psi, e.ups, e.f, e.sigma, e.R)
                        continue
                    if p == 1 and fo == 0:
                        self.solve_master_linear(alpha.index(1))
                        continue
                    res = resonance_set(alpha, self.basis, self.omega, self.style, self.eta)
                    self.param.log.append(res)
                    nu, mu = self.assemble_rhs(alpha)
                    psi, ups, f = self.solve_orderp(alpha, nu, mu, res)
                    self._store(alpha, psi, ups, f, sigma(alpha, self.lam, self.omega), res.members)
                stats["orders"][p] = {"monomials": count, "seconds": time.perf_counter() - t0}
                if progress:
                    progress(p, count)
            if rule.o_eps == 0:
                self._append_legacy_forcing()
        stats["seconds"] = time.perf_counter() - t_all
        stats["max_projection_mismatch"] = self.max_check
        stats["total_monomials"] = len(self.param.order)
        stats["legacy_forcing"] = bool(self.param.legacy_forcing)
        self.param.stats = stats
        return self.param

    def _append_legacy_forcing(self):
        # forcing projected on the master subspace; the mapping is left undeformed
        n2 = 2 * self.n
        for c in (n2, n2 + 1):
            f = self.XVh @ self.E
            self.param.legacy_forcing[unit(c, self.n_vars)] = f


def compute_parametrisation(model: MechModel, basis: MasterBasis, E, omega: float, style: str = "cnf",
                            rule: Optional[TruncationRule] = None, eta: float = 0.1, solver: str = "bordered",
                            reuse: Optional[Parametrisation] = None, full_basis=None) -> Parametrisation:
    """Compute all kept coefficients of the parametrisation.

    Parameters
    ----------
    model : MechModel
    basis : MasterBasis
    E : array_like
        Forcing shape ``E+ = E-``; zero for autonomous problems.
    omega : float
        Forcing frequency used in the eigenvalue combinations.
    style : {"graph", "cnf", "rnf"}
    rule : TruncationRule
    eta : float
        Relative resonance tolerance on imaginary parts.
    solver : {"bordered", "cnf", "modal"}
    reuse : Parametrisation, optional
        Source of forcing-free entries (they do not depend on ``omega``).
    full_basis : MasterBasis, optional
        Complete eigenbasis for the modal solver.

    Returns
    -------
    Parametrisation
    """
    eng = Engine(model, basis, E, omega, style, rule, eta, solver, full_basis)
    param = eng.run(reuse=reuse)
    if param.stats.get("max_projection_mismatch", 0.0) > 1e-6:
        log.warning("reduced-dynamics projection mismatch %.3e", param.stats["max_projection_mismatch"])
    return param
