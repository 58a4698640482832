"""Experiment configuration: one JSON document with five sections.

    {
      "schedule":   {"kind": "linear", "beta_start": 1e-4, "beta_end": 2e-2,
                     "base_steps": 1000, "ddim_steps": 50}
                  | {"kind": "explicit", "alpha_bar": [...]},
      "model":      {"weights": [...], "means": [[...], ...] | {"csv": "path"},
                     "covariance": {"diag": ...} | {"full": ...},
                     "labels": [...]?},
      "mechanism":  {"name": "ccs_full" | "ccs_partial" | "gp" | "ccdf",
                     "scale": ..., "t0": ...?, "seed": ...?,
                     "gamma": ...?, "condition": ...?, "refine_iters": ...?},
      "controller": {"mse_target": ..., "tol": ..., "batch_size": 24,
                     "max_iters": 6, "seed": 0, "metric": "rmse"},
      "experiment": {...}   # free-form parameters per subcommand
    }

Missing sections fall back to the shipped desk-scale testbed (two labeled
components in 64 dimensions).  All validation errors surface as
:class:`~ccslab.errors.InputError`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import testbeds
from .control import MECHANISMS, ControllerConfig
from .errors import InputError
from .schedule import NoiseSchedule
from .scoremodel import GaussianMixtureModel

__all__ = ["LabConfig", "load_config", "default_config_dict"]

DEFAULT_CFG_GAMMA = 3.0  # guidance weight when a condition is set without one


@dataclass
class LabConfig:
    schedule: NoiseSchedule
    model: GaussianMixtureModel
    mechanism: dict = field(default_factory=dict)
    controller: ControllerConfig | None = None
    experiment: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def default_config_dict() -> dict:
    return {
        "schedule": {
            "kind": "linear",
            "beta_start": 1e-4,
            "beta_end": 2e-2,
            "base_steps": 1000,
            "ddim_steps": 50,
        },
        "model": testbeds.mixture_model().to_config(),
        "mechanism": {"name": "ccs_full", "scale": 0.35, "seed": 0},
        "controller": {"mse_target": 0.12, "tol": 0.01, "batch_size": 24,
                       "max_iters": 6, "seed": 0},
        "experiment": {},
    }


def _schedule_from(section: dict) -> NoiseSchedule:
    kind = section.get("kind", "linear")
    if kind == "linear":
        return NoiseSchedule.linear(
            beta_start=float(section.get("beta_start", 1e-4)),
            beta_end=float(section.get("beta_end", 2e-2)),
            base_steps=int(section.get("base_steps", 1000)),
            ddim_steps=int(section.get("ddim_steps", 50)),
        )
    if kind == "explicit":
        if "alpha_bar" not in section:
            raise InputError("explicit schedule requires alpha_bar")
        return NoiseSchedule.explicit(section["alpha_bar"])
    raise InputError(f"unknown schedule kind {kind!r}")


def _means_from(spec, base_dir: Path) -> np.ndarray:
    if isinstance(spec, dict):
        if "csv" not in spec:
            raise InputError("means reference must be {'csv': path}")
        path = base_dir / spec["csv"]
        if not path.exists():
            raise InputError(f"means file not found: {path}")
        return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))
    return np.atleast_2d(np.asarray(spec, dtype=float))


def _model_from(section: dict, base_dir: Path) -> GaussianMixtureModel:
    try:
        weights = section["weights"]
        means = _means_from(section["means"], base_dir)
        cov_spec = section["covariance"]
    except KeyError as missing:
        raise InputError(f"model section missing {missing}") from None
    K, d = means.shape
    if "diag" in cov_spec:
        diag = np.asarray(cov_spec["diag"], dtype=float)
        if diag.ndim == 0:
            diag = np.full((K, d), float(diag))
        elif diag.ndim == 1:
            if diag.size != d:
                raise InputError("diagonal covariance vector must have length d")
            diag = np.tile(diag, (K, 1))
        covariances = diag
    elif "full" in cov_spec:
        covariances = np.asarray(cov_spec["full"], dtype=float)
    else:
        raise InputError("covariance must specify 'diag' or 'full'")
    return GaussianMixtureModel(
        weights, means, covariances, labels=section.get("labels")
    )


def _controller_from(section: dict | None) -> ControllerConfig | None:
    if not section:
        return None
    try:
        return ControllerConfig(
            mse_target=float(section["mse_target"]),
            tol=float(section["tol"]),
            batch_size=int(section.get("batch_size", 24)),
            max_iters=int(section.get("max_iters", 6)),
            seed=int(section.get("seed", 0)),
            metric=section.get("metric", "rmse"),
        )
    except KeyError as missing:
        raise InputError(f"controller section missing {missing}") from None


def _mechanism_from(section: dict | None) -> dict:
    if not section:
        return {}
    mech = dict(section)
    name = mech.get("name")
    if name is not None and name not in MECHANISMS:
        raise InputError(f"unknown mechanism {name!r}")
    if mech.get("condition") is not None and "gamma" not in mech:
        mech["gamma"] = DEFAULT_CFG_GAMMA
    return mech


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> LabConfig:
    """Load a config file (or the built-in default) into validated objects."""
    if path is None:
        raw = default_config_dict()
        base_dir = Path.cwd()
    else:
        path = Path(path)
        if not path.exists():
            raise InputError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"config is not valid JSON: {exc}") from None
        base_dir = path.parent
    if not isinstance(raw, dict):
        raise InputError("config root must be a JSON object")
    if overrides:
        for key, value in overrides.items():
            raw.setdefault(key, {})
            raw[key].update(value)

    schedule = _schedule_from(raw.get("schedule", {}))
    if "model" in raw:
        model = _model_from(raw["model"], base_dir)
    else:
        model = testbeds.mixture_model()
    return LabConfig(
        schedule=schedule,
        model=model,
        mechanism=_mechanism_from(raw.get("mechanism")),
        controller=_controller_from(raw.get("controller")),
        experiment=dict(raw.get("experiment", {})),
        raw=raw,
    )
