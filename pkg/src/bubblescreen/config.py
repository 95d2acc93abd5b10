"""Experiment configuration: YAML file with nested sections plus CLI overrides."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .geometry import KFunction

_DEFAULTS: dict = {
    "surface": {"kind": "disk", "area": 1.0},
    "k": {"constant": 0.0},
    "materials": {
        "rho_c": 1.0, "kappa_c": 1.0, "rho_b_bar": 1.0, "kappa_b_bar": 1.0,
        "lambda1_mag": 1.0 / 3.0,
    },
    "bubble_shape": {"radius": 1.0},
    "pulse": {"omega0": None, "t_rise": 1.5, "amplitude": 1.0},
    "source": {"position": [0.0, 0.0, 1.5]},
    "run": {
        "eps": 1.0 / 64.0,
        "T": 8.0,
        "step_safety": 0.4,
        "h_max": 0.05,
        "n_out": 481,
        "observation_points": [[0.0, 0.0, -0.5], [0.25, 0.15, 0.6], [0.0, 0.0, 0.7]],
        "condition_violation": "error",
    },
    "sweep": {"eps_list": [1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0]},
    "regimes": {
        "cells": [
            {"omega_factor": 1.0, "coupling_factor": 1.0},
            {"omega_factor": 100.0, "coupling_factor": 1.0},
            {"omega_factor": 0.01, "coupling_factor": 100.0},
        ],
        "transmitted_points": [[0.0, 0.0, -0.5], [0.15, -0.1, -0.55]],
        "window_fraction": 0.33,
    },
    "counting": {"d_list": [0.125, 0.0625, 0.03125], "k_exponents": [1.0, 2.0, 3.0]},
    "output": {"dir": "out"},
    "seed": 7,
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


@dataclass
class ExperimentConfig:
    """Resolved configuration; ``data`` stores the merged raw mapping."""

    data: dict = field(repr=False)

    # -- constructors ------------------------------------------------------
    @staticmethod
    def from_dict(raw: dict | None = None, overrides: dict | None = None) -> "ExperimentConfig":
        data = _merge(_DEFAULTS, raw or {})
        if overrides:
            data = _merge(data, overrides)
        cfg = ExperimentConfig(data=data)
        cfg.validate()
        return cfg

    @staticmethod
    def load(path, overrides: dict | None = None) -> "ExperimentConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {p}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        return ExperimentConfig.from_dict(raw, overrides)

    # -- accessors ---------------------------------------------------------
    @property
    def surface_kind(self) -> str:
        return self.data["surface"]["kind"]

    @property
    def surface_area(self) -> float:
        return float(self.data["surface"]["area"])

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def eps(self) -> float:
        return float(self.data["run"]["eps"])

    @property
    def eps_list(self) -> list[float]:
        return [float(e) for e in self.data["sweep"]["eps_list"]]

    @property
    def horizon(self) -> float:
        return float(self.data["run"]["T"])

    @property
    def observation_points(self) -> np.ndarray:
        return np.asarray(self.data["run"]["observation_points"], dtype=float)

    @property
    def output_dir(self) -> str:
        return self.data["output"]["dir"]

    def k_function(self) -> KFunction:
        spec = self.data["k"]
        if "constant" in spec:
            return KFunction.constant(float(spec["constant"]))
        if spec.get("name") == "linear_axis":
            return KFunction.linear_axis(
                scale=float(spec.get("scale", 4.0)),
                offset=float(spec.get("offset", 0.5)),
                axis=int(spec.get("axis", 2)),
            )
        raise ConfigError(f"unknown K specification {spec!r}")

    # -- validation --------------------------------------------------------
    def validate(self) -> None:
        data = self.data
        if data["surface"]["kind"] not in ("disk", "sphere"):
            raise ConfigError(f"unknown surface kind {data['surface']['kind']!r}")
        if data["run"]["condition_violation"] not in ("error", "warn"):
            raise ConfigError("run.condition_violation must be 'error' or 'warn'")
        eps_list = self.eps_list
        if any(e <= 0 for e in eps_list) or self.eps <= 0:
            raise ConfigError("eps values must be positive")
        d_list = data["sweep"].get("d_list")
        if d_list is not None:
            if len(d_list) != len(eps_list):
                raise ConfigError("sweep.d_list and sweep.eps_list differ in length")
            for d, e in zip(d_list, eps_list):
                if abs(d - np.sqrt(e)) > 1e-12:
                    raise ConfigError(
                        f"regime violation: d={d} must equal sqrt(eps)={np.sqrt(e)}"
                    )
        d_max = float(np.sqrt(max(eps_list + [self.eps])))
        obs = self.observation_points
        if obs.ndim != 2 or obs.shape[1] != 3:
            raise ConfigError("observation points must be a list of xyz triples")
        # stand-off check needs the surface; done cheaply against the z=0 plane
        # proxy for disks and exactly in build_scene for both kinds
        if float(data["run"]["step_safety"]) <= 0 or float(data["run"]["step_safety"]) > 0.5:
            raise ConfigError("run.step_safety must lie in (0, 0.5]")
        self._d_max = d_max

    # -- hashing -----------------------------------------------------------
    def canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def parse_override_list(text: str) -> list[float]:
    """Parse CLI list values like '1/64,1/128' or '0.1,0.05'."""
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if "/" in tok:
            num, den = tok.split("/", 1)
            out.append(float(num) / float(den))
        else:
            out.append(float(tok))
    if not out:
        raise ConfigError(f"empty list value {text!r}")
    return out
