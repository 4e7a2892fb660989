"""Run configuration: TOML sections with explicit defaults and strict keys.

Grammar: a TOML document whose top-level tables are the sections listed in
:data:`DEFAULTS`. Every key is optional; unknown sections or keys and values
of the wrong type are rejected. ``dpim --print-defaults`` prints the full
default document.
"""

from __future__ import annotations

import copy
import sys
from pathlib import Path
from typing import Any, Union

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .parametrisation import STYLES
from .polyalgebra import TruncationRule

__all__ = ["ConfigError", "DEFAULTS", "RunConfig", "load_config", "defaults_toml"]


class ConfigError(ValueError):
    """Invalid configuration file or value."""


DEFAULTS: dict[str, dict[str, Any]] = {
    "model": {
        "source": "duffing",  # duffing | arch2 | vk_beam | random | file
        "path": "",
        "omega0": 1.0,
        "xi": 0.01,
        "g": 0.0,
        "h": 1.0,
        "n_modes": 10,
        "bc": "clamped",
        "seed": 0,
    },
    "damping": {
        "kind": "model",  # model | rayleigh | modal
        "alpha": 0.0,
        "beta": 0.0,
        "alpha_over_omega1": 0.0,
        "modal_xi": [],
    },
    "masters": {"modes": [1]},
    "parametrisation": {
        "style": "cnf",
        "truncation": "coupled",
        "order": 5,
        "eps_order": 1,
        "m": 1,
        "eta": 0.1,
        "solver": "bordered",
        "precision_dps": 0,
    },
    "forcing": {
        "mode": 1,
        "kappa": [],
        "omega0": 0.0,  # 0: natural frequency of the first master
        "window": [0.9, 1.2],  # relative to omega0 unless window_absolute
        "window_absolute": False,
        "eps": 0.005,
    },
    "continuation": {
        "harmonics": 9,
        "n_fourier": 0,
        "ds": 0.01,
        "ds_max": 0.05,
        "max_steps": 5000,
        "stability": True,
        "reparametrise_per_point": False,
    },
    "oracle": {
        "hbm": False,
        "time_integration": False,
        "harmonics": 9,
        "n_fourier": 0,
        "ti_frequencies": 5,
    },
    "whisker": {
        "enabled": False,
        "phases": 6,
        "grid": 21,
        "radius": 0.5,
        "slave_mode": 2,
    },
    "output": {
        "directory": "dpim_out",
        "plots": True,
        "observable_mode": 1,
    },
}

_CHOICES = {
    ("model", "source"): ("duffing", "arch2", "vk_beam", "random", "file"),
    ("model", "bc"): ("clamped", "simply"),
    ("damping", "kind"): ("model", "rayleigh", "modal"),
    ("parametrisation", "style"): STYLES,
    ("parametrisation", "truncation"): ("asymptotic", "coupled", "disjoint"),
    ("parametrisation", "solver"): ("bordered", "cnf", "modal"),
}


def _check_type(where: str, default, value):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    else:  # pragma: no cover
        ok = True
    if not ok:
        raise ConfigError(f"{where}: expected {type(default).__name__}, got {type(value).__name__}")
    return float(value) if isinstance(default, float) else value


class RunConfig:
    """Validated configuration; sections are plain dicts (``cfg.model["xi"]``)."""

    def __init__(self, data: dict | None = None, base_dir: Union[str, Path] = "."):
        self.base_dir = Path(base_dir)
        self.data = copy.deepcopy(DEFAULTS)
        for sec, body in (data or {}).items():
            if sec not in DEFAULTS:
                raise ConfigError(f"unknown section [{sec}]")
            if not isinstance(body, dict):
                raise ConfigError(f"[{sec}] must be a table")
            for key, val in body.items():
                if key not in DEFAULTS[sec]:
                    raise ConfigError(f"unknown key '{key}' in [{sec}]")
                self.data[sec][key] = _check_type(f"[{sec}].{key}", DEFAULTS[sec][key], val)
        self._validate()

    def __getattr__(self, name):
        data = self.__dict__.get("data", {})
        if name in data:
            return data[name]
        raise AttributeError(name)

    def _validate(self):
        for (sec, key), choices in _CHOICES.items():
            if self.data[sec][key] not in choices:
                raise ConfigError(f"[{sec}].{key} must be one of {', '.join(choices)}")
        if self.model["source"] == "file" and not self.model["path"]:
            raise ConfigError("[model].path is required when source = 'file'")
        if not self.masters["modes"] or any(int(m) != m or m < 1 for m in self.masters["modes"]):
            raise ConfigError("[masters].modes must list 1-based mode indices")
        w = self.forcing["window"]
        if len(w) != 2 or not w[0] < w[1]:
            raise ConfigError("[forcing].window must be an increasing pair")
        nf = self.continuation["n_fourier"]
        if nf and nf < 2 * self.continuation["harmonics"] + 1:
            raise ConfigError("[continuation].n_fourier must be 0 or at least 2H + 1")
        nf = self.oracle["n_fourier"]
        if nf and nf < 4 * self.oracle["harmonics"] + 1:
            raise ConfigError("[oracle].n_fourier must be 0 or at least 4H + 1")
        self.rule()

    def rule(self) -> TruncationRule:
        p = self.parametrisation
        try:
            return TruncationRule(p["truncation"], p["order"], p["eps_order"], p["m"])
        except ValueError as exc:
            raise ConfigError(f"[parametrisation]: {exc}") from None

    def model_path(self) -> Path:
        p = Path(self.model["path"])
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)


def load_config(path: Union[str, Path, None]) -> RunConfig:
    """Read and validate a TOML configuration; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"configuration file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return RunConfig(data, base_dir=path.parent)


def defaults_toml() -> str:
    return tomli_w.dumps(DEFAULTS)
