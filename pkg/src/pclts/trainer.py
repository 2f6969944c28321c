"""Three-step robust training: PCLTS global fit, residual cleaning, OLS fine-tune."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigurationError, PipelineError, StructuralError, TrainingError
from .mlp import Dataset, NetworkParams, NetworkShape, fit_ols, init_params, ols_loss, residuals
from .optimizer import ObjectiveHandle, OptimizerSpec, minimize
from .robust_loss import (
    PCLTSObjective,
    RobustLossConfig,
    clean_mask_from_residuals,
    penalty_exceeds_cap,
)

REPORT_FORMAT = "pclts-report"


@dataclass(frozen=True)
class TrainSpec:
    """Everything a training run needs; ``seed`` overrides ``optimizer.seed``."""

    shape: NetworkShape
    loss: RobustLossConfig = field(default_factory=RobustLossConfig)
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    finetune_steps: int = 100
    finetune_rate: float = 1.0
    finetune_method: str = "bfgs"
    seed: int = 0
    standardize: bool = False

    def __post_init__(self):
        if self.finetune_steps < 0:
            raise ConfigurationError(f"finetune_steps must be >= 0, got {self.finetune_steps}")
        if not self.finetune_rate > 0:
            raise ConfigurationError(f"finetune_rate must be > 0, got {self.finetune_rate}")
        if self.finetune_method not in ("bfgs", "gd"):
            raise ConfigurationError(f"unknown finetune_method {self.finetune_method!r}")


@dataclass
class TrainReport:
    params: NetworkParams
    outlier_mask: np.ndarray  # True = removed
    residuals_stage1: np.ndarray
    scale: float
    objective: dict
    timings: dict
    penalty_above_cap: bool = False
    loss: Optional[RobustLossConfig] = None

    @property
    def n_removed(self) -> int:
        return int(np.count_nonzero(self.outlier_mask))

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "mask": "".join("1" if v else "0" for v in self.outlier_mask),
            "residuals_stage1": [float(v) for v in self.residuals_stage1],
            "scale": self.scale,
            "penalty_above_cap": self.penalty_above_cap,
            "loss": None if self.loss is None else self.loss.to_dict(),
            "objective": self.objective,
            "timings": self.timings,
            "model": self.params.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainReport":
        if d.get("format") != REPORT_FORMAT:
            raise StructuralError(f"not a training report (format={d.get('format')!r})")
        return cls(
            params=NetworkParams.from_dict(d["model"]),
            outlier_mask=np.array([c == "1" for c in d["mask"]], dtype=bool),
            residuals_stage1=np.asarray(d["residuals_stage1"], dtype=float),
            scale=float(d["scale"]),
            objective=dict(d["objective"]),
            timings=dict(d["timings"]),
            penalty_above_cap=bool(d.get("penalty_above_cap", False)),
            loss=None if d.get("loss") is None else RobustLossConfig.from_dict(d["loss"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "TrainReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check(data: Dataset, shape: NetworkShape):
    if data.m != shape.inputs:
        raise StructuralError(f"data has {data.m} inputs, network expects {shape.inputs}")


def _standardizer(x):
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return mu, sd


def _unstandardize(params: NetworkParams, mu, sd) -> NetworkParams:
    """Fold the input map x -> (x - mu)/sd into the first layer."""
    W = params.input_weights / sd
    b = params.input_biases - W @ mu
    return NetworkParams.from_parts(params.output_weights, params.output_bias, W, b)


def _stage1(data: Dataset, spec: TrainSpec, stream=None):
    _check(data, spec.shape)
    work = data
    mu = sd = None
    if spec.standardize:
        mu, sd = _standardizer(data.x)
        work = Dataset((data.x - mu) / sd, data.y, data.outlier_truth)

    t0 = time.perf_counter()
    fn = PCLTSObjective(work, spec.shape.hidden, spec.loss)
    handle = ObjectiveHandle(fn, spec.shape.n_params, budget=spec.optimizer.budget, stream=stream)
    result = minimize(handle, replace(spec.optimizer, seed=spec.seed))
    params1 = NetworkParams(spec.shape, result.best_x)
    if spec.standardize:
        params1 = _unstandardize(params1, mu, sd)
    t1 = time.perf_counter()

    r1 = residuals(params1, data)
    keep, s = clean_mask_from_residuals(r1, spec.loss, spec.loss.floor_for(data.y))
    t2 = time.perf_counter()
    objective = {
        "best_f": result.best_f,
        "evals_used": result.evals_used,
        "restart_final_f": [rec.final_f for rec in result.restarts],
    }
    timings = {"step1": t1 - t0, "step2": t2 - t1}
    return params1, r1, keep, s, objective, timings


def detect_outliers(data: Dataset, spec: TrainSpec) -> np.ndarray:
    """Steps I-II only; True marks rows flagged as outliers."""
    _, _, keep, _, _, _ = _stage1(data, spec)
    return ~keep


def train_robust(data: Dataset, spec: TrainSpec, stream=None) -> TrainReport:
    """Fit ``spec.shape`` to ``data`` robustly.

    Step I minimises the PCLTS objective with the derivative-free optimizer,
    Step II drops every row whose Step-I residual exceeds ``C * s``, and
    Step III runs least-squares training on the kept rows, warm-started from
    the Step-I weights.
    """
    params1, r1, keep, s, objective, timings = _stage1(data, spec, stream)
    if np.count_nonzero(keep) < 2:
        raise PipelineError(f"only {np.count_nonzero(keep)} row(s) survive cleaning")
    clean = data.subset(keep)

    t0 = time.perf_counter()
    objective["ols_stage1"] = ols_loss(params1, clean)
    params = fit_ols(params1, clean, steps=spec.finetune_steps, rate=spec.finetune_rate, method=spec.finetune_method)
    objective["ols_final"] = ols_loss(params, clean)
    timings["step3"] = time.perf_counter() - t0
    if not np.all(np.isfinite(params.theta)):
        raise TrainingError("non-finite parameters after fine-tuning")
    return TrainReport(
        params=params,
        outlier_mask=~keep,
        residuals_stage1=r1,
        scale=s,
        objective=objective,
        timings=timings,
        penalty_above_cap=penalty_exceeds_cap(s, spec.loss),
        loss=spec.loss,
    )


def train_baseline(
    data: Dataset,
    shape: NetworkShape,
    finetune_steps: int = 100,
    seed: int = 0,
    finetune_rate: float = 1.0,
    finetune_method: str = "bfgs",
) -> TrainReport:
    """Plain least-squares training on all rows from a random start."""
    _check(data, shape)
    t0 = time.perf_counter()
    params0 = init_params(shape, seed)
    params = fit_ols(params0, data, steps=finetune_steps, rate=finetune_rate, method=finetune_method)
    elapsed = time.perf_counter() - t0
    r = residuals(params, data)
    return TrainReport(
        params=params,
        outlier_mask=np.zeros(data.n, dtype=bool),
        residuals_stage1=r,
        scale=float("nan"),
        objective={"ols_final": float(r @ r)},
        timings={"step3": elapsed},
    )


def baseline_for(data: Dataset, spec: TrainSpec) -> TrainReport:
    """Baseline with the fine-tuning controls and seed of ``spec``."""
    return train_baseline(data, spec.shape, spec.finetune_steps, spec.seed, spec.finetune_rate, spec.finetune_method)
