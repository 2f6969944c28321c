"""Residual-based objectives: median scale, the PCLTS penalty, PCLTS and LTS.

The penalty for a residual ``t`` at scale ``s`` is

    G(t) = t^2                                   |t| <= Cs
         = B                                     |t| >= Cs(1+a)
         = (|t| - Cs)(B - (Cs)^2)/(Cs a) + (Cs)^2   otherwise

i.e. squared residuals inside ``C`` times the median absolute residual, a flat
removal penalty ``B`` far outside, and a linear bridge between the two so the
objective stays Lipschitz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, StructuralError
from .mlp import Dataset, NetworkParams, predict_theta, residuals


@dataclass(frozen=True)
class RobustLossConfig:
    """Parameters of the PCLTS criterion.

    ``s_floor=None`` selects the data-dependent floor ``1e-8 * (1 + median|y|)``.
    """

    C: float = 8.0
    B: float = 8.0
    a: float = 0.1
    s_floor: Optional[float] = None

    def __post_init__(self):
        if not self.C >= 1:
            raise ConfigurationError(f"C must be >= 1, got {self.C}")
        if not self.a > 0:
            raise ConfigurationError(f"a must be > 0, got {self.a}")
        if not self.B >= 0:
            raise ConfigurationError(f"B must be >= 0, got {self.B}")
        if self.s_floor is not None and not self.s_floor > 0:
            raise ConfigurationError(f"s_floor must be > 0, got {self.s_floor}")

    def floor_for(self, y) -> float:
        if self.s_floor is not None:
            return float(self.s_floor)
        return 1e-8 * (1.0 + float(np.median(np.abs(y))))

    def to_dict(self) -> dict:
        return {"C": self.C, "B": self.B, "a": self.a, "s_floor": self.s_floor}

    @classmethod
    def from_dict(cls, d: dict) -> "RobustLossConfig":
        unknown = set(d) - {"C", "B", "a", "s_floor"}
        if unknown:
            raise ConfigurationError(f"unknown loss keys: {sorted(unknown)}")
        kw = {k: float(v) for k, v in d.items() if v is not None}
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class ScaledResiduals:
    r: np.ndarray
    s: float
    order: np.ndarray

    @classmethod
    def from_residuals(cls, r, s_floor: float) -> "ScaledResiduals":
        r = np.asarray(r, dtype=float)
        return cls(r, median_abs(r, s_floor), np.argsort(np.abs(r), kind="stable"))


def median_abs(r, s_floor: float) -> float:
    """Median of |r| (mean of the middle pair for even n), at least ``s_floor``."""
    t = np.abs(np.asarray(r, dtype=float).ravel())
    n = t.size
    if n == 0:
        raise StructuralError("median of an empty residual vector")
    if not s_floor > 0:
        raise ConfigurationError(f"s_floor must be > 0, got {s_floor}")
    return max(_median(t), float(s_floor))


def _median(t: np.ndarray) -> float:
    n = t.size
    half = n // 2
    if n % 2:
        return float(np.partition(t, half)[half])
    p = np.partition(t, (half - 1, half))
    return 0.5 * (float(p[half - 1]) + float(p[half]))


def g_penalty(t, s: float, cfg: RobustLossConfig):
    """Penalty G applied elementwise; returns a float for scalar ``t``."""
    scalar = np.ndim(t) == 0
    out = _g(np.abs(np.asarray(t, dtype=float)), cfg.C * s, cfg.B, cfg.a)
    return float(out) if scalar else out


def _g(t, cs, B, a):
    cs2 = cs * cs
    hi = cs * (1.0 + a)
    slope = (B - cs2) / (cs * a)
    return np.where(t <= cs, t * t, np.where(t >= hi, B, (t - cs) * slope + cs2))


def pclts_from_residuals(r, cfg: RobustLossConfig, s_floor: float) -> float:
    t = np.abs(np.asarray(r, dtype=float))
    s = max(_median(t), s_floor)
    return float(np.sum(_g(t, cfg.C * s, cfg.B, cfg.a)))


def pclts_objective(params: NetworkParams, data: Dataset, cfg: RobustLossConfig) -> float:
    r = residuals(params, data)
    return pclts_from_residuals(r, cfg, cfg.floor_for(data.y))


def lts_h(n: int, p: int) -> int:
    """Number of kept residuals, floor((n + p + 1) / 2), capped at n."""
    return min(n, (n + p + 1) // 2)


def lts_from_residuals(r, p: int) -> float:
    q = np.sort(np.square(np.asarray(r, dtype=float)))
    return float(np.sum(q[: lts_h(q.size, p)]))


def lts_objective(params: NetworkParams, data: Dataset, p: Optional[int] = None) -> float:
    """Sum of the h smallest squared residuals; ``p`` defaults to inputs + 1."""
    if p is None:
        p = data.m + 1
    if p < 0:
        raise ConfigurationError(f"p must be >= 0, got {p}")
    return lts_from_residuals(residuals(params, data), p)


def clean_mask_from_residuals(r, cfg: RobustLossConfig, s_floor: float):
    r = np.asarray(r, dtype=float)
    s = median_abs(r, s_floor)
    return np.abs(r) <= cfg.C * s, s


def clean_mask(params: NetworkParams, data: Dataset, cfg: RobustLossConfig) -> np.ndarray:
    """True for rows kept (|r_i| <= C s); False for rows removed as outliers."""
    mask, _ = clean_mask_from_residuals(residuals(params, data), cfg, cfg.floor_for(data.y))
    return mask


def penalty_exceeds_cap(s: float, cfg: RobustLossConfig) -> bool:
    """True when B > (Cs)^2, outside the range the criterion is designed for."""
    return cfg.B > (cfg.C * s) ** 2 and not math.isclose(cfg.B, (cfg.C * s) ** 2)


class PCLTSObjective:
    """Callable PCLTS objective on a raw parameter vector (for the optimizers)."""

    def __init__(self, data: Dataset, hidden: int, cfg: RobustLossConfig):
        self.X = data.x
        self.y = data.y
        self.m = data.m
        self.hidden = hidden
        self.cfg = cfg
        self.s_floor = cfg.floor_for(data.y)

    def __call__(self, theta) -> float:
        r = predict_theta(theta, self.X, self.m, self.hidden) - self.y
        return pclts_from_residuals(r, self.cfg, self.s_floor)
