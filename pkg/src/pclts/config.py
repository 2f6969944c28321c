"""Experiment configuration: a JSON document whose sections mirror the module types.

Resolution order is built-in defaults, then the config file, then command-line
flags.  The resolved document is itself a valid config file.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

from .bench import ExperimentSpec, default_cells, full_cells, grid
from .datagen import SyntheticSpec
from .errors import ConfigurationError
from .mlp import NetworkShape
from .optimizer import OptimizerSpec
from .robust_loss import RobustLossConfig
from .trainer import TrainSpec

DEFAULTS = {
    "seed": 0,
    "standardize": False,
    "network": {"hidden": 10},
    "loss": RobustLossConfig().to_dict(),
    "optimizer": {k: v for k, v in OptimizerSpec().to_dict().items() if k != "seed"},
    "finetune": {"steps": 100, "rate": 1.0, "method": "bfgs"},
    "data": {"dataset_id": 1, "m": 1, "n": 100, "noise": 0.0, "delta": 0.0},
    "bench": {
        "preset": "desk",
        "datasets": None,
        "dims": None,
        "sizes": None,
        "deltas": None,
        "noises": None,
        "repetitions": 1,
        "seed_policy": "per_repetition",
    },
}


def _merge(base: dict, over: dict, path="") -> dict:
    for key, value in over.items():
        if key not in base:
            raise ConfigurationError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"config key {path + key!r} must be a table")
            _merge(base[key], value, f"{path}{key}.")
        else:
            base[key] = value
    return base


def resolve(file_cfg: dict | None = None, overrides: dict | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if file_cfg:
        _merge(cfg, file_cfg)
    if overrides:
        _merge(cfg, overrides)
    return cfg


def load(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    return doc


def dumps(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True)


def train_spec(cfg: dict, m: int) -> TrainSpec:
    opt = dict(cfg["optimizer"], seed=cfg["seed"])
    return TrainSpec(
        shape=NetworkShape(int(m), int(cfg["network"]["hidden"])),
        loss=RobustLossConfig.from_dict(cfg["loss"]),
        optimizer=OptimizerSpec.from_dict(opt),
        finetune_steps=int(cfg["finetune"]["steps"]),
        finetune_rate=float(cfg["finetune"]["rate"]),
        finetune_method=str(cfg["finetune"]["method"]),
        seed=int(cfg["seed"]),
        standardize=bool(cfg["standardize"]),
    )


def synthetic_spec(cfg: dict) -> SyntheticSpec:
    d = cfg["data"]
    return SyntheticSpec(
        dataset_id=int(d["dataset_id"]),
        m=int(d["m"]),
        n=int(d["n"]),
        noise=float(d["noise"]),
        delta=float(d["delta"]),
        seed=int(cfg["seed"]),
    )


def experiment_spec(cfg: dict, output=None) -> ExperimentSpec:
    b = cfg["bench"]
    axes = ("datasets", "dims", "sizes", "deltas", "noises")
    if any(b[k] is not None for k in axes):
        missing = [k for k in axes if b[k] is None]
        if missing:
            raise ConfigurationError(f"explicit bench grid is missing {missing}")
        cells = grid(b["datasets"], b["dims"], b["sizes"], b["deltas"], b["noises"])
    elif b["preset"] == "desk":
        cells = default_cells()
    elif b["preset"] == "full":
        cells = full_cells()
    else:
        raise ConfigurationError(f"unknown bench preset {b['preset']!r}")
    return ExperimentSpec(
        cells=cells,
        train=train_spec(cfg, 1),
        repetitions=int(b["repetitions"]),
        seed=int(cfg["seed"]),
        seed_policy=str(b["seed_policy"]),
        output=None if output is None else str(output),
    )
