"""Parametrisation of forced invariant manifolds by homological equations."""

from .core import (
    STYLES,
    Engine,
    Entry,
    Parametrisation,
    ParametrisationError,
    ResonanceSet,
    compute_parametrisation,
    resonance_set,
    sigma,
)
from .io import load_json, save_json, to_json_dict
from .oracles import (
    CrossResonanceError,
    cnf_single_master_solve,
    coefficient_mismatch,
    full_eigenbasis,
    modal_oracle_solve,
)
from .residual import evaluate, full_coordinates, invariance_residual, residual_slope

__all__ = [
    "STYLES",
    "Engine",
    "Entry",
    "Parametrisation",
    "ParametrisationError",
    "ResonanceSet",
    "compute_parametrisation",
    "resonance_set",
    "sigma",
    "CrossResonanceError",
    "cnf_single_master_solve",
    "coefficient_mismatch",
    "modal_oracle_solve",
    "full_eigenbasis",
    "evaluate",
    "full_coordinates",
    "invariance_residual",
    "residual_slope",
    "save_json",
    "load_json",
    "to_json_dict",
]
