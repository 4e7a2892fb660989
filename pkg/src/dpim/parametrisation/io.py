"""JSON serialisation of parametrisations.

Complex arrays are written as flat lists of interleaved real and imaginary
parts. The layout is versioned by ``schema_version``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np

from .. import SCHEMA_VERSION
from ..polyalgebra import TruncationRule
from ..spectral import MasterBasis
from .core import Entry, Parametrisation, ResonanceSet

__all__ = ["to_json_dict", "save_json", "load_json"]


def _pack(a) -> list:
    a = np.asarray(a, dtype=complex).ravel()
    out = np.empty(2 * a.size)
    out[0::2], out[1::2] = a.real, a.imag
    return [float(x) for x in out]


def _unpack(vals, shape=None) -> np.ndarray:
    v = np.asarray(vals, dtype=float)
    out = v[0::2] + 1j * v[1::2]
    return out.reshape(shape) if shape is not None else out


def to_json_dict(param: Parametrisation) -> dict:
    be = param.backend
    b = param.basis
    return {
        "schema_version": SCHEMA_VERSION,
        "style": param.style,
        "truncation": {"mode": param.rule.mode, "o": param.rule.o, "o_eps": param.rule.o_eps, "m": param.rule.m},
        "omega0": float(param.omega),
        "eta": float(param.eta),
        "n_master": param.n,
        "n_dof": param.N,
        "coordinates": "z_1..z_n, conj(z_1)..conj(z_n), z_plus, z_minus",
        "basis": {
            "kind": b.kind,
            "master": [m + 1 for m in b.master],
            "lambda": _pack(b.lam_complex()),
            "omega": [float(x) for x in b.omega],
            "xi": [float(x) for x in b.xi],
            "YU": _pack(be.to_complex(b.YU)),
            "YV": _pack(be.to_complex(b.YV)),
            "XU": _pack(be.to_complex(b.XU)),
            "XV": _pack(be.to_complex(b.XV)),
        },
        "forcing_shape": [float(x) for x in param.E],
        "monomials": [
            {
                "exponents": list(a),
                "psi": _pack(be.to_complex(param.entries[a].psi)),
                "ups": _pack(be.to_complex(param.entries[a].ups)),
                "f": _pack(be.to_complex(param.entries[a].f)),
                "resonant": [r + 1 for r in param.entries[a].R],
            }
            for a in param.order
        ],
        "legacy_forcing": [
            {"exponents": list(a), "f": _pack(be.to_complex(f))} for a, f in param.legacy_forcing.items()
        ],
        "resonance_log": [r.as_dict() for r in param.log],
        "counts": {str(p): d["monomials"] for p, d in param.stats.get("orders", {}).items()},
    }


def save_json(param: Parametrisation, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_json_dict(param), indent=1, sort_keys=True))
    return path


def load_json(path: Union[str, Path]) -> Parametrisation:
    """Rebuild a (double precision) parametrisation from its JSON export."""
    d = json.loads(Path(path).read_text())
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {d.get('schema_version')}, expected {SCHEMA_VERSION}")
    n, N = d["n_master"], d["n_dof"]
    bd = d["basis"]
    shape = (N, 2 * n)
    basis = MasterBasis(
        [m - 1 for m in bd["master"]], _unpack(bd["lambda"]), _unpack(bd["YU"], shape), _unpack(bd["YV"], shape),
        _unpack(bd["XU"], shape), _unpack(bd["XV"], shape), np.array(bd["omega"]), np.array(bd["xi"]), bd["kind"],
    )
    t = d["truncation"]
    param = Parametrisation(d["style"], TruncationRule(t["mode"], t["o"], t["o_eps"], t["m"]), basis,
                            d["omega0"], np.array(d["forcing_shape"]), eta=d.get("eta", 0.1))
    for m in d["monomials"]:
        a = tuple(m["exponents"])
        param.entries[a] = Entry(_unpack(m["psi"]), _unpack(m["ups"]), _unpack(m["f"]), R=tuple(r - 1 for r in m["resonant"]))
        param.order.append(a)
    for m in d.get("legacy_forcing", []):
        param.legacy_forcing[tuple(m["exponents"])] = _unpack(m["f"])
    for r in d.get("resonance_log", []):
        param.log.append(ResonanceSet(tuple(r["alpha"]), complex(*r["sigma"]), tuple(x - 1 for x in r["members"]),
                                      tuple(r["reasons"]), r["damping_flag"]))
    return param
