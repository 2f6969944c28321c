"""Synthetic benchmark data (Data Sets 1-10), outlier injection and CSV I/O.

Each data set is a target function ``h`` on a box ``[lo, hi]^m``; training
rows are ``y = h(x) + N(0, noise^2)``, then a proportion ``delta`` of them is
replaced by five tight clusters of gross outliers at ``y ~ 10000``.  The test
set is drawn independently and is noiseless.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ParseError
from .mlp import Dataset

DOMAINS = {
    1: (-2.0, 2.0),
    2: (-2.0, 2.0),
    3: (-10.0, 10.0),
    4: (-1.0, 1.0),
    5: (0.0, 0.3),
    6: (-2.0, 2.0),
    7: (-5.0, 5.0),
    8: (-1.0, 3.0),
    9: (-2.0, 2.0),
    10: (-6.0, 6.0),
}

FORMULAS = {
    1: "||x||^(2/3)",
    2: "x1 * exp(||x||)",
    3: "sin(||x||) / ||x||",
    4: "sin(5/m sum x) * acos(1/m sum x) * cos(3/m sum x - 2/n)",
    5: "sin(10 pi ||x||) + sin(20 pi ||x||)",
    6: "(x1^2 - x2^2 + x3^2 - ...) * sin(0.5 (x1 + x3 + ...))",
    7: "sinc(x1 + x3 + ...) * sinc(x2 + x4 + ...)",
    8: "0.2 x1 x2 ... xm + 1.2 sin(||x||^2)",
    9: "max(exp(-10 x1^2), exp(-50 x2^2), 1.25 exp(-5 ||x||^2))",
    10: "0.5 ||x|| sin(||x||) + cos^2(||x||)",
}

OUTLIER_LEVEL = 10_000.0
OUTLIER_SPREAD = 0.01
N_CLUSTERS = 5


def _sinc(u):
    u = np.asarray(u, dtype=float)
    safe = np.where(u == 0.0, 1.0, u)
    return np.where(u == 0.0, 1.0, np.sin(safe) / safe)


def evaluate(dataset_id: int, X, n: Optional[int] = None) -> np.ndarray:
    """Vectorised target function over the rows of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m = X.shape[1]
    if dataset_id not in DOMAINS:
        raise ConfigurationError(f"dataset_id must be in 1..10, got {dataset_id}")
    norm = np.sqrt(np.sum(X * X, axis=1))
    if dataset_id == 1:
        return norm ** (2.0 / 3.0)
    if dataset_id == 2:
        return X[:, 0] * np.exp(norm)
    if dataset_id == 3:
        return _sinc(norm)
    if dataset_id == 4:
        if n is None:
            raise ConfigurationError("Data Set 4 depends on the sample size n")
        mean = X.mean(axis=1)
        return np.sin(5.0 * mean) * np.arccos(mean) * np.cos(3.0 * mean - 2.0 / n)
    if dataset_id == 5:
        return np.sin(10 * np.pi * norm) + np.sin(20 * np.pi * norm)
    if dataset_id == 6:
        signs = np.where(np.arange(m) % 2 == 0, 1.0, -1.0)
        return (X * X) @ signs * np.sin(0.5 * X[:, 0::2].sum(axis=1))
    if dataset_id == 7:
        # for m = 1 the even-index sum is empty and its factor is sinc(0) = 1
        return _sinc(X[:, 0::2].sum(axis=1)) * _sinc(X[:, 1::2].sum(axis=1))
    if dataset_id == 8:
        return 0.2 * np.prod(X, axis=1) + 1.2 * np.sin(norm**2)
    if dataset_id == 9:
        if m < 2:
            raise ConfigurationError("Data Set 9 needs at least two inputs")
        return np.maximum.reduce([
            np.exp(-10 * X[:, 0] ** 2),
            np.exp(-50 * X[:, 1] ** 2),
            1.25 * np.exp(-5 * norm**2),
        ])
    return 0.5 * norm * np.sin(norm) + np.cos(norm) ** 2


def target_function(dataset_id: int, x, n: Optional[int] = None) -> float:
    """h(x) for a single point ``x``; ``n`` is only used by Data Set 4."""
    x = np.asarray(x, dtype=float).ravel()
    return float(evaluate(dataset_id, x[None, :], n)[0])


@dataclass(frozen=True)
class SyntheticSpec:
    dataset_id: int
    m: int
    n: int
    noise: float = 0.0
    delta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.dataset_id not in DOMAINS:
            raise ConfigurationError(f"dataset_id must be in 1..10, got {self.dataset_id}")
        if self.m < 1:
            raise ConfigurationError(f"m must be >= 1, got {self.m}")
        if self.dataset_id == 9 and self.m < 2:
            raise ConfigurationError("Data Set 9 needs m >= 2")
        if self.n < 1:
            raise ConfigurationError(f"n must be >= 1, got {self.n}")
        if not self.noise >= 0:
            raise ConfigurationError(f"noise must be >= 0, got {self.noise}")
        if not 0 <= self.delta <= 0.5:
            raise ConfigurationError(f"delta must lie in [0, 0.5], got {self.delta}")

    @property
    def n_outliers(self) -> int:
        return int(math.floor(self.delta * self.n + 0.5))

    @property
    def domain(self):
        return DOMAINS[self.dataset_id]


@dataclass(frozen=True)
class GeneratedData:
    spec: SyntheticSpec
    train: Dataset
    test: Dataset
    cluster: np.ndarray  # cluster index per training row, -1 for inliers

    @property
    def domain(self):
        return self.spec.domain


def cluster_sizes(k: int) -> list:
    base, extra = divmod(k, N_CLUSTERS)
    return [base + (1 if c < extra else 0) for c in range(N_CLUSTERS)]


def generate(spec: SyntheticSpec) -> GeneratedData:
    train_rng, test_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(2))
    lo, hi = spec.domain
    n, m = spec.n, spec.m

    x = train_rng.uniform(lo, hi, (n, m))
    y = evaluate(spec.dataset_id, x, n)
    if spec.noise > 0:
        y = y + train_rng.normal(0.0, spec.noise, n)

    k = spec.n_outliers
    cluster = np.full(n, -1)
    if k:
        rows = np.sort(train_rng.choice(n, k, replace=False))
        start = 0
        for c, size in enumerate(cluster_sizes(k)):
            members = rows[start : start + size]
            start += size
            center = train_rng.uniform(lo, hi, m)
            x[members] = center + train_rng.normal(0.0, OUTLIER_SPREAD, (size, m))
            y[members] = OUTLIER_LEVEL + train_rng.normal(0.0, OUTLIER_SPREAD, size)
            cluster[members] = c

    xt = test_rng.uniform(lo, hi, (n, m))
    yt = evaluate(spec.dataset_id, xt, n)
    return GeneratedData(spec, Dataset(x, y, cluster >= 0), Dataset(xt, yt), cluster)


def save_csv(data: Dataset, path) -> None:
    """Write ``x1..xm,y[,outlier]`` with 17 significant digits."""
    path = Path(path)
    header = [f"x{j + 1}" for j in range(data.m)] + ["y"]
    if data.outlier_truth is not None:
        header.append("outlier")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(data.n):
            row = [f"{v:.17g}" for v in data.x[i]] + [f"{data.y[i]:.17g}"]
            if data.outlier_truth is not None:
                row.append("1" if data.outlier_truth[i] else "0")
            w.writerow(row)


def load_csv(path) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        if "y" not in header:
            raise ParseError("header has no 'y' column", line=1)
        iy = header.index("y")
        io = header.index("outlier") if "outlier" in header else None
        ix = [j for j, h in enumerate(header) if j not in (iy, io)]
        if not ix:
            raise ParseError("header has no input columns", line=1)
        xs, ys, outs = [], [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", line=line)
            try:
                vals = [float(c) for c in row[: len(header)]]
            except ValueError as exc:
                raise ParseError(f"non-numeric cell ({exc})", line=line) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("non-finite value", line=line)
            xs.append([vals[j] for j in ix])
            ys.append(vals[iy])
            if io is not None:
                if vals[io] not in (0.0, 1.0):
                    raise ParseError("outlier column must be 0 or 1", line=line)
                outs.append(vals[io] == 1.0)
    if not ys:
        raise ParseError("no data rows", line=2)
    return Dataset(np.array(xs), np.array(ys), np.array(outs) if io is not None else None)
