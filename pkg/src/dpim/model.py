"""Second-order mechanical models with quadratic and cubic polynomial stiffness.

The equations of motion are::

    M q'' + C q' + K q + G(q, q) + H(q, q, q) = F cos(Omega t)

with ``G(u, v)_i = sum_jk g_ijk u_j v_k`` and
``H(u, v, w)_i = sum_jkl h_ijkl u_j v_k w_l``. Both tensors are stored in
coordinate format and symmetrised over their input slots on construction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from itertools import permutations
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.optimize import brentq

__all__ = [
    "ModelError",
    "PolyTensor",
    "ForcingTerm",
    "ForcingSpec",
    "MechModel",
    "undamped_modes",
    "load_model",
    "parse_model",
    "export_csv",
    "builtin_duffing",
    "builtin_vk_beam",
    "builtin_arch2",
    "random_rayleigh_model",
    "rayleigh",
    "epsilon_load",
]


class ModelError(ValueError):
    """Raised for malformed or physically invalid models."""


class PolyTensor:
    """Sparse symmetric multilinear form ``T(u1, ..., ud)_i``.

    Parameters
    ----------
    n : int
        Number of degrees of freedom.
    indices : array_like of int, shape (nnz, d + 1)
        Zero-based ``(i, j, k, ...)`` index tuples.
    values : array_like of float, shape (nnz,)
    symmetrise : bool, optional
        Average each entry over all permutations of the input slots.
    """

    def __init__(self, n: int, degree: int, indices=None, values=None, symmetrise: bool = True):
        self.n = int(n)
        self.degree = int(degree)
        idx = np.zeros((0, degree + 1), dtype=np.int64) if indices is None else np.asarray(indices, dtype=np.int64)
        val = np.zeros(0) if values is None else np.asarray(values, dtype=float)
        idx = idx.reshape(-1, degree + 1)
        if idx.shape[0] != val.shape[0]:
            raise ModelError("tensor index and value arrays differ in length")
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise ModelError(f"tensor index out of range for N={self.n}")
        if symmetrise and idx.shape[0]:
            idx, val = self._symmetrise(idx, val)
        else:
            idx, val = self._merge(idx, val)
        self.indices = idx
        self.values = val

    def _merge(self, idx, val):
        if not idx.shape[0]:
            return idx, val
        keys, inv = np.unique(idx, axis=0, return_inverse=True)
        acc = np.zeros(keys.shape[0])
        np.add.at(acc, inv.ravel(), val)
        keep = acc != 0.0
        return keys[keep], acc[keep]

    def _symmetrise(self, idx, val):
        perms = list(permutations(range(1, self.degree + 1)))
        rows, vals = [], []
        for p in perms:
            rows.append(np.column_stack([idx[:, 0]] + [idx[:, q] for q in p]))
            vals.append(val / len(perms))
        return self._merge(np.vstack(rows), np.concatenate(vals))

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    def __bool__(self) -> bool:
        return self.nnz > 0

    def __call__(self, *vecs):
        """Evaluate the form; each argument has shape ``(N,)`` or ``(N, T)``."""
        if len(vecs) != self.degree:
            raise ValueError(f"expected {self.degree} arguments, got {len(vecs)}")
        for v in vecs:
            if np.shape(v)[0] != self.n:
                raise ValueError(f"dimension mismatch: vector of length {np.shape(v)[0]} for N={self.n}")
        vecs = [np.asarray(v) for v in vecs]
        dtype = np.result_type(*vecs, self.values)
        out = np.zeros(vecs[0].shape, dtype=dtype)
        if dtype == object:
            out[...] = 0
        if not self.nnz:
            return out
        term = self.values.reshape((-1,) + (1,) * (vecs[0].ndim - 1))
        for slot, v in enumerate(vecs, start=1):
            term = term * v[self.indices[:, slot]]
        return self._scatter(out, term, self._rows())

    def jacobian(self, u) -> np.ndarray:
        """Derivative of ``T(u, ..., u)``, shape ``(N, N)`` or ``(N, N, T)``."""
        u = np.asarray(u)
        out = np.zeros((self.n,) + u.shape, dtype=np.result_type(u, self.values))
        if not self.nnz:
            return out
        coef = self.degree * self.values.reshape((-1,) + (1,) * (u.ndim - 1))
        for slot in range(2, self.degree + 1):
            coef = coef * u[self.indices[:, slot]]
        flat = self._scatter(out.reshape((self.n * self.n,) + u.shape[1:]), coef, self._pairs())
        return flat.reshape(out.shape)

    # scatter through sparse indicator matrices; np.add.at is slow on large batches
    def _rows(self):
        if getattr(self, "_S_rows", None) is None:
            self._S_rows = scipy.sparse.csr_matrix(
                (np.ones(self.nnz), (self.indices[:, 0], np.arange(self.nnz))), shape=(self.n, self.nnz))
        return self._S_rows

    def _pairs(self):
        if getattr(self, "_S_pairs", None) is None:
            key = self.indices[:, 0] * self.n + self.indices[:, 1]
            self._S_pairs = scipy.sparse.csr_matrix(
                (np.ones(self.nnz), (key, np.arange(self.nnz))), shape=(self.n * self.n, self.nnz))
        return self._S_pairs

    @staticmethod
    def _scatter(out, term, S):
        if out.dtype == object:
            coo = S.tocoo()
            np.add.at(out, coo.row, term[coo.col])
            return out
        return np.asarray(S @ term.reshape(term.shape[0], -1)).reshape(out.shape).astype(out.dtype, copy=False)

    def entries(self):
        return [(tuple(int(i) for i in ix), float(v)) for ix, v in zip(self.indices, self.values)]

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n,) * (self.degree + 1))
        np.add.at(out, tuple(self.indices.T), self.values)
        return out


@dataclass(frozen=True)
class ForcingTerm:
    """One forcing contribution: ``kind`` is ``"mode"`` or ``"vector"``.

    ``mode`` terms give ``kappa * M * phi_index`` (1-based undamped mode
    index); ``vector`` terms give an explicit nodal force vector.
    """

    kind: str
    amplitude: float = 1.0
    index: int = 1
    vector: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("mode", "vector"):
            raise ModelError(f"unknown forcing kind {self.kind!r}")


@dataclass(frozen=True)
class ForcingSpec:
    """Harmonic forcing ``F cos(Omega t)`` assembled from forcing terms."""

    terms: tuple = ()
    omega: float = 1.0

    def force_vector(self, model: "MechModel") -> np.ndarray:
        """Real amplitude vector ``F``."""
        F = np.zeros(model.N)
        if not self.terms:
            return F
        phi = None
        for t in self.terms:
            if t.kind == "mode":
                if phi is None:
                    phi = undamped_modes(model.M, model.K)[1]
                if not 1 <= t.index <= model.N:
                    raise ModelError(f"forcing mode index {t.index} out of range 1..{model.N}")
                F += t.amplitude * (model.M @ phi[:, t.index - 1])
            else:
                v = np.asarray(t.vector, dtype=float)
                if v.shape != (model.N,):
                    raise ModelError(f"forcing vector of length {v.shape[0]} for N={model.N}")
                F += t.amplitude * v
        return F

    def shape(self, model: "MechModel") -> np.ndarray:
        """``E+ = E- = F / 2`` so that ``E+ e^{i Omega t} + E- e^{-i Omega t} = F cos(Omega t)``."""
        return 0.5 * self.force_vector(model)

    def scaled(self, factor: float) -> "ForcingSpec":
        return replace(self, terms=tuple(replace(t, amplitude=t.amplitude * factor) for t in self.terms))

    def with_omega(self, omega: float) -> "ForcingSpec":
        return replace(self, omega=float(omega))


@dataclass(frozen=True)
class MechModel:
    """Second-order model ``M q'' + C q' + K q + G(q,q) + H(q,q,q) = F(t)``."""

    M: np.ndarray
    C: np.ndarray
    K: np.ndarray
    G: PolyTensor
    H: PolyTensor
    forcing: tuple = ()
    name: str = "model"
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def N(self) -> int:
        return self.M.shape[0]

    def eval_G(self, u, v):
        return self.G(u, v)

    def eval_H(self, u, v, w):
        return self.H(u, v, w)

    def internal_force(self, q):
        """``K q + G(q, q) + H(q, q, q)`` for ``q`` of shape ``(N,)`` or ``(N, T)``."""
        return self.K @ q + self.G(q, q) + self.H(q, q, q)

    def forcing_spec(self, omega: float = 1.0) -> ForcingSpec:
        return ForcingSpec(tuple(self.forcing), omega)

    def with_damping(self, C) -> "MechModel":
        return replace(self, C=np.asarray(C, dtype=float))

    def with_forcing(self, terms) -> "MechModel":
        return replace(self, forcing=tuple(terms))

    def validate(self, sym_tol: float = 1e-10) -> None:
        """Check shapes, symmetry of ``M, C, K`` and positive definiteness of ``M``."""
        n = self.N
        for name in ("M", "C", "K"):
            A = getattr(self, name)
            if A.shape != (n, n):
                raise ModelError(f"{name} has shape {A.shape}, expected {(n, n)}")
            scale = max(np.abs(A).max(), 1.0)
            if np.abs(A - A.T).max() > sym_tol * scale:
                raise ModelError(f"{name} is not symmetric")
        if self.G.n != n or self.H.n != n:
            raise ModelError("nonlinear tensor dimension does not match the matrices")
        try:
            np.linalg.cholesky(self.M)
        except np.linalg.LinAlgError:
            raise ModelError("mass matrix is not positive definite") from None


def undamped_modes(M, K) -> tuple[np.ndarray, np.ndarray]:
    """Mass-normalised undamped modes sorted by ascending frequency.

    Returns
    -------
    omega : ndarray, shape (N,)
    phi : ndarray, shape (N, N)
        Columns satisfy ``phi.T M phi = I``; the largest-magnitude entry of
        each column is positive.
    """
    w2, phi = scipy.linalg.eigh(K, M)
    order = np.argsort(w2)
    w2, phi = w2[order], phi[:, order]
    if np.any(w2 < -1e-12 * max(1.0, abs(w2).max())):
        raise ModelError("stiffness matrix has negative eigenvalues")
    for k in range(phi.shape[1]):
        j = np.argmax(np.abs(phi[:, k]))
        if phi[j, k] < 0:
            phi[:, k] = -phi[:, k]
    return np.sqrt(np.clip(w2, 0.0, None)), phi


# ---------------------------------------------------------------- file format

_SECTIONS = {"M": 2, "C": 2, "K": 2, "G": 3, "H": 4, "FORCING": None}


def parse_model(text: str, name: str = "model") -> MechModel:
    """Parse the sectioned text format (see :func:`load_model`)."""
    entries: dict[str, list] = {k: [] for k in _SECTIONS}
    forcing_lines = []
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ModelError(f"line {lineno}: malformed section header {line!r}")
            section = line[1:-1].strip().upper()
            if section not in _SECTIONS:
                raise ModelError(f"line {lineno}: unknown section [{section}]")
            continue
        if section is None:
            raise ModelError(f"line {lineno}: data outside of any section")
        tok = line.split()
        if section == "FORCING":
            forcing_lines.append((lineno, tok))
            continue
        width = _SECTIONS[section]
        if len(tok) != width + 1:
            raise ModelError(f"line {lineno}: [{section}] expects {width} indices and a value, got {len(tok)} fields")
        try:
            ix = [int(t) for t in tok[:-1]]
            val = float(tok[-1])
        except ValueError:
            raise ModelError(f"line {lineno}: cannot parse {line!r}") from None
        if min(ix) < 1:
            raise ModelError(f"line {lineno}: indices are 1-based")
        entries[section].append((lineno, ix, val))

    n = 0
    for sec in ("M", "C", "K"):
        for _, ix, _ in entries[sec]:
            n = max(n, *ix)
    if n == 0 or not entries["M"]:
        raise ModelError("model has no [M] entries")
    mats = {}
    for sec in ("M", "C", "K"):
        A = np.zeros((n, n))
        for _, (i, j), v in entries[sec]:
            A[i - 1, j - 1] += v
        mats[sec] = A
    tensors = {}
    for sec, deg in (("G", 2), ("H", 3)):
        rows = entries[sec]
        for lineno, ix, _ in rows:
            if max(ix) > n:
                raise ModelError(f"line {lineno}: index {max(ix)} exceeds N={n} (dimension mismatch)")
        idx = np.array([np.array(ix) - 1 for _, ix, _ in rows], dtype=np.int64).reshape(-1, deg + 1)
        val = np.array([v for _, _, v in rows])
        tensors[sec] = PolyTensor(n, deg, idx, val)

    terms = []
    explicit = np.zeros(n)
    has_vector = False
    for lineno, tok in forcing_lines:
        kind = tok[0].lower()
        if kind not in ("mode", "vector") or len(tok) != 3:
            raise ModelError(f"line {lineno}: expected 'mode <idx> <kappa>' or 'vector <i> <value>'")
        try:
            idx = int(tok[1])
            val = float(tok[2])
        except ValueError:
            raise ModelError(f"line {lineno}: cannot parse forcing entry") from None
        if not 1 <= idx <= n:
            raise ModelError(f"line {lineno}: index {idx} out of range 1..{n}")
        if kind == "mode":
            terms.append(ForcingTerm("mode", val, idx))
        else:
            explicit[idx - 1] += val
            has_vector = True
    if has_vector:
        terms.append(ForcingTerm("vector", 1.0, vector=tuple(explicit)))

    model = MechModel(mats["M"], mats["C"], mats["K"], tensors["G"], tensors["H"], tuple(terms), name=name)
    model.validate()
    return model


def load_model(path: Union[str, Path]) -> MechModel:
    """Read a model file.

    The format is UTF-8 text organised in sections ``[M]``, ``[C]``, ``[K]``
    (lines ``i j value``), ``[G]`` (``i j k value``), ``[H]``
    (``i j k l value``) and ``[FORCING]`` (``mode <idx> <kappa>`` or
    ``vector <i> <value>``). Indices are 1-based and ``#`` starts a comment.
    Repeated entries are summed.
    """
    path = Path(path)
    return parse_model(path.read_text(encoding="utf-8"), name=path.stem)


def export_csv(model: MechModel, directory: Union[str, Path]) -> list[Path]:
    """Write the assembled matrices and tensors as CSV files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name in ("M", "C", "K"):
        p = directory / f"{name}.csv"
        np.savetxt(p, getattr(model, name), delimiter=",")
        written.append(p)
    for name, tensor, cols in (("G", model.G, "i,j,k"), ("H", model.H, "i,j,k,l")):
        p = directory / f"{name}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols.split(",") + ["value"])
            for ix, v in tensor.entries():
                w.writerow([i + 1 for i in ix] + [repr(v)])
        written.append(p)
    p = directory / "F.csv"
    np.savetxt(p, model.forcing_spec().force_vector(model), delimiter=",")
    written.append(p)
    return written


# ----------------------------------------------------------------- generators


def rayleigh(M, K, alpha: float, beta: float) -> np.ndarray:
    """Proportional damping ``C = alpha M + beta K``."""
    return alpha * np.asarray(M) + beta * np.asarray(K)


def builtin_duffing(omega0: float = 1.0, xi: float = 0.0, g: float = 0.0, h: float = 0.0, kappa: float = 0.0) -> MechModel:
    """One-dof oscillator ``q'' + 2 xi w0 q' + w0^2 q + g q^2 + h q^3 = kappa cos(Omega t)``."""
    if omega0 <= 0 or xi < 0:
        raise ModelError("Duffing requires omega0 > 0 and xi >= 0")
    G = PolyTensor(1, 2, [[0, 0, 0]], [g])
    H = PolyTensor(1, 3, [[0, 0, 0, 0]], [h])
    forcing = (ForcingTerm("mode", kappa, 1),) if kappa else ()
    return MechModel(
        np.eye(1), np.array([[2 * xi * omega0]]), np.array([[omega0**2]]), G, H, forcing,
        name="duffing", meta={"phi_max": 1.0, "L_CH": 1.0},
    )


def random_rayleigh_model(n: int = 3, alpha: float = 0.01, beta: float = 0.001, seed: int = 0,
                          g_scale: float = 0.3, h_scale: float = 0.3) -> MechModel:
    """Random SPD model with Rayleigh damping and dense random G, H."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    M = A @ A.T / n + np.eye(n)
    B = rng.standard_normal((n, n))
    K = B @ B.T + n * np.eye(n)
    gi = np.array(np.meshgrid(*[range(n)] * 3, indexing="ij")).reshape(3, -1).T
    hi = np.array(np.meshgrid(*[range(n)] * 4, indexing="ij")).reshape(4, -1).T
    G = PolyTensor(n, 2, gi, g_scale * rng.standard_normal(len(gi)))
    H = PolyTensor(n, 3, hi, h_scale * rng.standard_normal(len(hi)))
    return MechModel(M, rayleigh(M, K, alpha, beta), K, G, H, (ForcingTerm("mode", 1.0, 1),), name="random")


def builtin_arch2() -> MechModel:
    """Two-mode arch-like model with quadratic coupling, shipped as data."""
    from importlib import resources

    text = resources.files("dpim").joinpath("data/arch2.model").read_text(encoding="utf-8")
    return parse_model(text, name="arch2")


def _cc_roots(n: int) -> np.ndarray:
    # cos(b) cosh(b) = 1, divided through by cosh(b) to avoid overflow
    g = lambda b: math.cos(b) - 1.0 / math.cosh(b)
    out = []
    for k in range(1, n + 1):
        c = (k + 0.5) * math.pi
        out.append(brentq(g, c - 0.5, c + 0.5, xtol=1e-14, rtol=1e-15))
    return np.array(out)


def _cc_shape(beta: float, L: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clamped-clamped shape and slope, overflow-free for large ``beta L``."""
    bl = beta * L
    e = math.exp(-bl)
    den = 1.0 - e * e - 2.0 * math.sin(bl) * e  # = 2 e^{-bL} (sinh bL - sin bL)
    sig = (1.0 + e * e - 2.0 * math.cos(bl) * e) / den  # (cosh - cos)/(sinh - sin)
    one_minus = 2.0 * (-e - math.sin(bl) + math.cos(bl)) / den  # (1 - sig) e^{bL}
    bx = beta * x
    grow = one_minus * np.exp(bx - bl)
    decay = (1.0 + sig) * np.exp(-bx)
    s = 0.5 * (grow + decay) - (np.cos(bx) - sig * np.sin(bx))
    ds = beta * (0.5 * (grow - decay) + np.sin(bx) + sig * np.cos(bx))
    return s, ds


def builtin_vk_beam(n_modes: int = 1, L: float = 1000.0, thickness: float = 10.0, width: float = 24.0,
                    E: float = 1.6e5, rho: float = 2.32e-3, bc: str = "clamped", n_quad: int = 4000) -> MechModel:
    """Modal von Karman beam model restrained in the axial direction.

    Parameters
    ----------
    n_modes : int
        Number of bending modes retained.
    L, thickness, width : float
        Beam length, thickness (characteristic length) and width.
    E, rho : float
        Young modulus and density. Defaults are silicon in micrometre,
        microsecond, nanogram units.
    bc : {"clamped", "simply"}
        Clamped-clamped or simply-supported ends.
    n_quad : int
        Number of Gauss-Legendre nodes per unit panel count used for the
        membrane integrals.

    Returns
    -------
    MechModel
        Unit modal mass, ``K = diag(omega_k^2)``, ``G = 0`` and ``H`` from
        the axial stretching integral. ``meta`` retains the mode shapes.
    """
    if n_modes < 1:
        raise ModelError("n_modes must be >= 1")
    A = width * thickness
    J = width * thickness**3 / 12.0
    c = math.sqrt(E * J / (rho * A))
    if bc in ("clamped", "clamped-clamped", "cc"):
        betas = _cc_roots(n_modes) / L
        shape = lambda k, xs: _cc_shape(betas[k], L, xs)
        bc = "clamped"
    elif bc in ("simply", "simply-supported", "ss"):
        betas = np.arange(1, n_modes + 1) * math.pi / L
        shape = lambda k, xs: (np.sin(betas[k] * xs), betas[k] * np.cos(betas[k] * xs))
        bc = "simply"
    else:
        raise ModelError(f"unsupported boundary condition {bc!r}")
    omega = betas**2 * c

    panels = max(8, 4 * n_modes)
    gx, gw = np.polynomial.legendre.leggauss(max(16, n_quad // panels))
    edges = np.linspace(0.0, L, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    xq = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    wq = (half[:, None] * gw[None, :]).ravel()

    S = np.empty((n_modes, xq.size))
    dS = np.empty_like(S)
    for k in range(n_modes):
        s, ds = shape(k, xq)
        norm = math.sqrt(rho * A * np.sum(wq * s * s))
        S[k], dS[k] = s / norm, ds / norm
    Aprime = (dS * wq) @ dS.T
    coef = E * A / (2.0 * L)
    hi = np.array(np.meshgrid(*[range(n_modes)] * 4, indexing="ij")).reshape(4, -1).T
    hv = coef * Aprime[hi[:, 0], hi[:, 3]] * Aprime[hi[:, 1], hi[:, 2]]
    H = PolyTensor(n_modes, 3, hi, hv)

    xs = np.linspace(0.0, L, 201)
    shapes = np.empty((n_modes, xs.size))
    for k in range(n_modes):
        s, _ = shape(k, xs)
        norm = math.sqrt(rho * A * np.sum(wq * shape(k, xq)[0] ** 2))
        shapes[k] = s / norm
    phi_max = float(np.max(np.abs(shapes[0])))
    meta = {
        "bc": bc,
        "x": xs,
        "shapes": shapes,
        "phi_max": phi_max,
        "phi_max_all": np.max(np.abs(shapes), axis=1),
        "L_CH": thickness,
        "beta": betas,
    }
    return MechModel(
        np.eye(n_modes), np.zeros((n_modes, n_modes)), np.diag(omega**2),
        PolyTensor(n_modes, 2), H, (ForcingTerm("mode", 1.0, 1),), name=f"vk_beam_{bc}", meta=meta,
    )


def epsilon_load(kappa: float, phi_max: float, L_CH: float, omega: float) -> float:
    """Nondimensional forcing level ``(phi_max / L_CH) * kappa / omega^2``."""
    if min(kappa, phi_max, L_CH, omega) <= 0:
        raise ValueError("epsilon_load requires positive arguments")
    return (phi_max / L_CH) * kappa / omega**2
