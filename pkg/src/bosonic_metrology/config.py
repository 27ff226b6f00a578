"""Run configuration: defaults, schema validation and resolution into objects."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import jsonschema
import numpy as np

from .encoding import ProcessSpec
from .lindblad import LindbladConfig, SystemParams
from .probes import ProbeSpec

DEFAULTS = {
    "probe": {"family": "SCS", "alpha": 2.0},
    "reference": None,
    "process": "PhaseRotation",
    "grid": None,
    "n_shots": 1000,
    "readout_flip": 0.0,
    "seed": 0,
    "threads": 1,
    "lindblad": None,
    "analysis": {"fit_degree": None, "bootstrap_resamples": 1000, "precision_convention": "shot"},
    "weights": {"nbar": 1.0, "w": [0.2, 0.35, 0.5, 0.65, 0.8]},
    "budget": {"nbar": [0.5, 1.0, 1.76], "cases": ["none", "cavity_decay", "self_kerr", "qubit", "all"]},
    "bayes": {
        "theta_values": [0.1, 0.2, 0.3, 0.4, 0.6, 0.8, 1.0],
        "N": 1000,
        "repetitions": 100,
        "chi_true": None,
        "chi_guess_factor": 1.1,
        "N_per_round": 1000,
        "max_rounds": 4,
        "theta_opt": None,
    },
    "output": {"dir": "out"},
}


class ConfigError(ValueError):
    pass


def schema() -> dict:
    text = resources.files("bosonic_metrology").joinpath("data/run_config.schema.json").read_text()
    return json.loads(text)


def validate(raw: dict) -> None:
    try:
        jsonschema.validate(raw, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("probe", "reference"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    probe: ProbeSpec
    reference: ProbeSpec
    process: ProcessSpec
    grid: np.ndarray
    n_shots: int
    readout_flip: float
    seed: int
    threads: int
    lindblad: Optional[tuple]
    analysis: dict
    weights: dict
    budget: dict
    bayes: dict
    output_dir: str

    @classmethod
    def from_dict(cls, raw: Optional[dict] = None) -> "RunConfig":
        raw = raw or {}
        validate(raw)
        d = _merge(DEFAULTS, raw)
        validate(d)
        try:
            probe = ProbeSpec.from_dict(d["probe"])
            reference = (ProbeSpec.from_dict(d["reference"]) if d["reference"] is not None
                         else ProbeSpec.cs_nbar(probe.nominal_nbar()))
            process = ProcessSpec(d["process"])
            g = d["grid"]
            if g is None:
                grid = process.default_grid()
            else:
                if g["stop"] <= g["start"]:
                    raise ValueError("grid stop must exceed start")
                grid = np.linspace(g["start"], g["stop"], g["points"])
            lind = None
            if d["lindblad"] is not None:
                pd = d["lindblad"].get("params", "reference_device")
                params = SystemParams.reference_device() if pd == "reference_device" else SystemParams.from_dict(pd)
                lcfg = dict(d["lindblad"].get("config", {}))
                # one readout model: the top-level flip carries into the master-equation run
                flip = lcfg.setdefault("readout_flip", d["readout_flip"])
                if flip != d["readout_flip"]:
                    raise ValueError("readout_flip differs between top level and lindblad.config")
                lind = (params, LindbladConfig(**lcfg))
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        return cls(probe, reference, process, grid, d["n_shots"], d["readout_flip"], d["seed"], d["threads"],
                   lind, d["analysis"], d["weights"], d["budget"], d["bayes"], d["output"]["dir"])

    @classmethod
    def load(cls, path: Optional[str]) -> "RunConfig":
        if path is None:
            return cls.from_dict({})
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(raw)

    def resolved(self) -> dict:
        """Every setting with defaults materialized; schema-valid."""
        lind = None
        if self.lindblad is not None:
            params, cfg = self.lindblad
            lind = {"params": params.to_dict(), "config": cfg.to_dict()}
        out = {
            "probe": self.probe.to_dict(),
            "reference": self.reference.to_dict(),
            "process": self.process.kind,
            "grid": {"start": float(self.grid[0]), "stop": float(self.grid[-1]), "points": int(self.grid.size)},
            "n_shots": self.n_shots,
            "readout_flip": self.readout_flip,
            "seed": self.seed,
            "threads": self.threads,
            "lindblad": lind,
            "analysis": dict(self.analysis),
            "weights": dict(self.weights),
            "budget": dict(self.budget),
            "bayes": dict(self.bayes),
            "output": {"dir": self.output_dir},
        }
        validate(out)
        return out

