"""Experiment configuration: JSON schema, validation, hashing.

Lengths are given in wavelengths (keys ending in ``_wavelengths``); the
medium may specify either ``wavelength`` or ``kappa``. Example::

    {
      "medium": {"wavelength": 1.0, "eps0": 1.0},
      "inclusion": {"center_wavelengths": [0.13, -0.21, 0.07],
                    "rho_wavelengths": 0.05, "eps_r": 3.0},
      "trial": {"eps_r": 2.0},
      "acquisition": {"mode": "multi", "n_directions": 50, "quadrature_count": 2000},
      "grid": {"origin_wavelengths": [-1.837, -2.247, -1.893],
               "spacing_wavelengths": 0.1, "dims": [41, 41, 41]},
      "noise": {"target_snr": 5.0, "seed": 0, "trials": 500},
      "output": {"formats": ["csv", "json", "pgm"]}
    }

Missing keys take the defaults below.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .em_kernels import InclusionSpec, Medium, TrialSpec
from .imaging import SearchGrid

__all__ = ["ConfigError", "ExperimentConfig", "DEFAULTS"]

UNIT_SPHERE_VOLUME = 4.0 * math.pi / 3.0

DEFAULTS: dict = {
    "medium": {"wavelength": 1.0, "kappa": None, "eps0": 1.0},
    "inclusion": {
        "center_wavelengths": [0.13, -0.21, 0.07],
        "rho_wavelengths": 0.05,
        "eps_r": 3.0,
        "volume_O": UNIT_SPHERE_VOLUME,
        "polarization": None,
    },
    "trial": {"eps_r": 2.0, "volume_O": UNIT_SPHERE_VOLUME, "polarization": None},
    "acquisition": {
        "mode": "multi",
        "n_directions": 50,
        "quadrature_count": 2000,
        "quadrature_scheme": "fibonacci-fitted",
    },
    # 41^3 points, 0.1 wavelength apart, centered 0.37/0.43/0.33 cells off z_D
    "grid": {
        "origin_wavelengths": [-1.833, -2.253, -1.897],
        "spacing_wavelengths": 0.1,
        "dims": [41, 41, 41],
    },
    "noise": {
        "sigma": None,
        "target_snr": 5.0,
        "seed": 0,
        "trials": 500,
        "n_directions": 20,
        "scaling_base_n": 10,
        "separations_wavelengths": [0.25, 0.5, 1.0],
        "probe_direction": [0.0, 0.0, 1.0],
        "tolerances": {"variance": 0.15, "covariance": 0.15, "scaling": 0.20, "snr": 0.15},
    },
    "validation": {"multi_n": 200, "grid_points": 21, "seed": 0},
    "output": {"formats": ["csv", "json", "pgm"]},
}

_HASHED_SECTIONS = ("medium", "inclusion", "trial", "acquisition", "grid", "noise")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _merge(defaults: dict, given: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"{where}: unknown key")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected a table")
            out[key] = _merge(defaults[key], value, where)
        else:
            out[key] = value
    return out


def _positive(data: dict, path: str, *keys):
    for key in keys:
        value = data[key]
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not (
            math.isfinite(value) and value > 0
        ):
            raise ConfigError(f"{path}.{key}: must be a positive number, got {value!r}")


def _vector(value, where: str) -> list[float]:
    if not (isinstance(value, (list, tuple)) and len(value) == 3):
        raise ConfigError(f"{where}: expected three numbers")
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected three numbers") from None


def _tensor(value, where: str):
    if value is None:
        return None
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a 3x3 matrix") from None
    if arr.shape != (3, 3):
        raise ConfigError(f"{where}: expected a 3x3 matrix")
    return arr


class ExperimentConfig:
    """Validated experiment configuration (a plain nested dict underneath)."""

    def __init__(self, data: dict | None = None):
        self.data = _merge(DEFAULTS, data or {}, "")
        self._validate()

    # -- construction and serialization ---------------------------------
    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a table")
        return cls(raw)

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    def __eq__(self, other) -> bool:
        return isinstance(other, ExperimentConfig) and self.data == other.data

    @property
    def hash(self) -> str:
        hashed = {k: self.data[k] for k in _HASHED_SECTIONS}
        canonical = json.dumps(hashed, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def with_overrides(self, **sections) -> "ExperimentConfig":
        """Copy with some keys replaced, e.g. ``noise={"seed": 3}``."""
        data = copy.deepcopy(self.data)
        for section, values in sections.items():
            data[section].update(values)
        return ExperimentConfig(data)

    # -- validation ------------------------------------------------------
    def _validate(self) -> None:
        d = self.data
        med = d["medium"]
        if med["kappa"] is None and med["wavelength"] is None:
            raise ConfigError("medium: give wavelength or kappa")
        if med["kappa"] is not None and med["wavelength"] is not None:
            if not math.isclose(2 * math.pi / med["kappa"], med["wavelength"], rel_tol=1e-12):
                raise ConfigError("medium: wavelength and kappa disagree")
        for key in ("kappa", "wavelength"):
            if med[key] is not None:
                _positive(med, "medium", key)
        _positive(med, "medium", "eps0")

        inc = d["inclusion"]
        _vector(inc["center_wavelengths"], "inclusion.center_wavelengths")
        _positive(inc, "inclusion", "rho_wavelengths", "eps_r", "volume_O")
        _tensor(inc["polarization"], "inclusion.polarization")
        tr = d["trial"]
        _positive(tr, "trial", "eps_r", "volume_O")
        _tensor(tr["polarization"], "trial.polarization")

        acq = d["acquisition"]
        if acq["mode"] not in ("multi", "single"):
            raise ConfigError("acquisition.mode: expected 'multi' or 'single'")
        for key in ("n_directions", "quadrature_count"):
            if not isinstance(acq[key], int) or acq[key] < 1:
                raise ConfigError(f"acquisition.{key}: must be a positive integer")
        if acq["quadrature_count"] < 6:
            raise ConfigError("acquisition.quadrature_count: must be at least 6")
        if acq["quadrature_scheme"] not in ("fibonacci", "fibonacci-fitted"):
            raise ConfigError("acquisition.quadrature_scheme: unknown scheme")

        grid = d["grid"]
        _vector(grid["origin_wavelengths"], "grid.origin_wavelengths")
        _positive(grid, "grid", "spacing_wavelengths")
        dims = grid["dims"]
        if not (isinstance(dims, list) and len(dims) == 3 and all(isinstance(n, int) and n >= 1 for n in dims)):
            raise ConfigError("grid.dims: expected three positive integers")
        if max((n - 1) * grid["spacing_wavelengths"] for n in dims) < 1.0:
            raise ConfigError("grid: must extend over at least one wavelength")

        noise = d["noise"]
        if noise["sigma"] is None:
            _positive(noise, "noise", "target_snr")
        elif not (isinstance(noise["sigma"], (int, float)) and noise["sigma"] >= 0):
            raise ConfigError("noise.sigma: must be a non-negative number or null")
        for key in ("seed",):
            if not isinstance(noise[key], int) or noise[key] < 0:
                raise ConfigError(f"noise.{key}: must be a non-negative integer")
        for key in ("trials", "n_directions", "scaling_base_n"):
            if not isinstance(noise[key], int) or noise[key] < 1:
                raise ConfigError(f"noise.{key}: must be a positive integer")
        if noise["trials"] < 2:
            raise ConfigError("noise.trials: need at least 2")
        for s in noise["separations_wavelengths"]:
            if not isinstance(s, (int, float)) or s <= 0:
                raise ConfigError("noise.separations_wavelengths: entries must be positive")
        direction = _vector(noise["probe_direction"], "noise.probe_direction")
        if not any(direction):
            raise ConfigError("noise.probe_direction: must be nonzero")

        for fmt in d["output"]["formats"]:
            if fmt not in ("csv", "json", "pgm"):
                raise ConfigError(f"output.formats: unknown format {fmt!r}")

    # -- physical objects ------------------------------------------------
    @property
    def wavelength(self) -> float:
        med = self.data["medium"]
        if med["wavelength"] is not None:
            return float(med["wavelength"])
        return 2.0 * math.pi / med["kappa"]

    def medium(self) -> Medium:
        med = self.data["medium"]
        kappa = med["kappa"] if med["kappa"] is not None else 2.0 * math.pi / med["wavelength"]
        return Medium(float(kappa), float(med["eps0"]))

    def inclusion(self, volume_scale: float = 1.0) -> InclusionSpec:
        inc = self.data["inclusion"]
        lam = self.wavelength
        return InclusionSpec(
            center=np.array(inc["center_wavelengths"], dtype=float) * lam,
            rho=inc["rho_wavelengths"] * lam,
            eps_r=float(inc["eps_r"]),
            volume_O=float(inc["volume_O"]) * volume_scale,
            polarization=_tensor(inc["polarization"], "inclusion.polarization"),
        )

    def trial(self) -> TrialSpec:
        tr = self.data["trial"]
        return TrialSpec(
            eps_r=float(tr["eps_r"]),
            volume_O=float(tr["volume_O"]),
            polarization=_tensor(tr["polarization"], "trial.polarization"),
        )

    def grid(self) -> SearchGrid:
        g = self.data["grid"]
        lam = self.wavelength
        return SearchGrid(
            np.array(g["origin_wavelengths"], dtype=float) * lam,
            g["spacing_wavelengths"] * lam,
            tuple(g["dims"]),
        )
