"""Benchmark matrix: robust vs. plain training on generated data, scored by test RMSE."""
from __future__ import annotations

import csv
import hashlib
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .datagen import SyntheticSpec, generate
from .errors import ConfigurationError, ParseError
from .mlp import Dataset, NetworkParams, NetworkShape, residuals
from .trainer import TrainSpec, baseline_for, train_robust

BREAKDOWN_RMSE = 100.0
SEED_POLICIES = ("per_repetition", "shared")


def rmse(params: NetworkParams, test: Dataset) -> float:
    r = residuals(params, test)
    return float(np.sqrt(np.mean(r * r)))


def cell_seed(global_seed: int, dataset_id: int, m: int, n: int, delta: float, noise: float, repetition: int) -> int:
    """Stable 32-bit seed for one cell/repetition, independent of grid order."""
    key = f"{int(global_seed)}|{int(dataset_id)}|{int(m)}|{int(n)}|{float(delta)!r}|{float(noise)!r}|{int(repetition)}"
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:4], "little")


@dataclass(frozen=True)
class ExperimentSpec:
    """A grid of data cells plus the training template applied to each.

    The template's ``shape.inputs`` and ``seed`` are replaced per cell; the
    ``seed`` of each ``SyntheticSpec`` in ``cells`` is ignored in favour of
    :func:`cell_seed`.
    """

    cells: Sequence[SyntheticSpec]
    train: TrainSpec = field(default_factory=lambda: TrainSpec(NetworkShape(1, 10)))
    repetitions: int = 1
    seed: int = 0
    seed_policy: str = "per_repetition"
    output: Optional[str] = None

    def __post_init__(self):
        if len(self.cells) == 0:
            raise ConfigurationError("experiment grid is empty")
        if self.repetitions < 1:
            raise ConfigurationError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.seed_policy not in SEED_POLICIES:
            raise ConfigurationError(f"seed_policy must be one of {SEED_POLICIES}")
        object.__setattr__(self, "cells", tuple(self.cells))


@dataclass
class CellResult:
    dataset_id: int
    m: int
    n: int
    delta: float
    noise: float
    repetition: int
    seed: int
    rmse_pclts: float = math.nan
    rmse_baseline: float = math.nan
    outlier_recall: float = math.nan
    outlier_precision: float = math.nan
    n_flagged: int = 0
    n_outliers: int = 0
    time_step1: float = math.nan
    time_step3: float = math.nan
    cpu_pclts: float = math.nan
    cpu_baseline: float = math.nan
    breakdown_pclts: bool = False
    breakdown_baseline: bool = False
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


COLUMNS = [f.name for f in fields(CellResult)]
_INT = {"dataset_id", "m", "n", "repetition", "seed", "n_flagged", "n_outliers"}
_BOOL = {"breakdown_pclts", "breakdown_baseline"}


def grid(datasets, dims, sizes, deltas, noises) -> List[SyntheticSpec]:
    cells = []
    for ds, m, n, delta, noise in itertools.product(datasets, dims, sizes, deltas, noises):
        if ds == 9 and m < 2:
            continue
        cells.append(SyntheticSpec(ds, m, n, noise, delta))
    return cells


def default_cells() -> List[SyntheticSpec]:
    """The 20-cell desk matrix: Data Sets 1-3 at m = 1."""
    cells = grid([1, 2, 3], [1], [100, 500], [0.0, 0.2, 0.4], [0.1])
    cells.insert(0, SyntheticSpec(1, 1, 100, 0.0, 0.0))
    cells.insert(1, SyntheticSpec(1, 1, 500, 0.0, 0.2))
    return cells


def full_cells() -> List[SyntheticSpec]:
    """Every benchmark combination for Data Sets 1-10 (1764 cells)."""
    return grid(range(1, 11), [1, 2, 3, 5, 10], [100, 500, 5000], [0.0, 0.2, 0.4, 0.5], [0.0, 0.1, 0.2])


def _score_mask(flagged: np.ndarray, truth: np.ndarray):
    tp = int(np.count_nonzero(flagged & truth))
    n_true, n_flag = int(np.count_nonzero(truth)), int(np.count_nonzero(flagged))
    recall = tp / n_true if n_true else 1.0
    precision = tp / n_flag if n_flag else 1.0
    return recall, precision


def run_cell(cell: SyntheticSpec, template: TrainSpec, repetition: int, seed: int) -> CellResult:
    res = CellResult(cell.dataset_id, cell.m, cell.n, cell.delta, cell.noise, repetition, seed)
    try:
        data = generate(replace(cell, seed=seed))
        spec = replace(template, shape=NetworkShape(cell.m, template.shape.hidden), seed=seed)
        report = train_robust(data.train, spec)
        t0 = time.perf_counter()
        base = baseline_for(data.train, spec)
        res.cpu_baseline = time.perf_counter() - t0
        res.rmse_pclts = rmse(report.params, data.test)
        res.rmse_baseline = rmse(base.params, data.test)
        truth = data.train.outlier_truth
        res.outlier_recall, res.outlier_precision = _score_mask(report.outlier_mask, truth)
        res.n_flagged = report.n_removed
        res.n_outliers = int(np.count_nonzero(truth))
        res.time_step1 = report.timings["step1"]
        res.time_step3 = report.timings["step3"]
        res.cpu_pclts = sum(report.timings.values())
        res.breakdown_pclts = bool(res.rmse_pclts > BREAKDOWN_RMSE)
        res.breakdown_baseline = bool(res.rmse_baseline > BREAKDOWN_RMSE)
    except Exception as exc:  # a failing cell must not abort the matrix
        res.error = f"{type(exc).__name__}: {exc}"
    return res


def _jobs(spec: ExperimentSpec):
    for cell in spec.cells:
        for rep in range(spec.repetitions):
            r = rep if spec.seed_policy == "per_repetition" else 0
            seed = cell_seed(spec.seed, cell.dataset_id, cell.m, cell.n, cell.delta, cell.noise, r)
            yield cell, spec.train, rep, seed


def run_matrix(spec: ExperimentSpec, workers: int = 1, progress=None) -> List[CellResult]:
    """Run every cell and repetition; results come back in grid order.

    With ``workers > 1`` cells run in separate processes; each cell's timings
    are wall-clock and so include any contention between workers.
    ``progress(result)`` is called as each result becomes available in order.
    """
    jobs = list(_jobs(spec))
    results = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_cell, *job) for job in jobs]
            for fut in futures:
                results.append(fut.result())
                if progress:
                    progress(results[-1])
    else:
        for job in jobs:
            results.append(run_cell(*job))
            if progress:
                progress(results[-1])
    if spec.output:
        emit_csv(results, spec.output)
    return results


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_csv(results: Sequence[CellResult], path) -> None:
    """One row per result, in the given order, under a fixed header (``COLUMNS``)."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for res in results:
            d = asdict(res)
            w.writerow([_fmt(d[c]) for c in COLUMNS])


def load_results_csv(path) -> List[CellResult]:
    out = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != COLUMNS:
            raise ParseError(f"unexpected results header {reader.fieldnames}", line=1)
        for row in reader:
            kw = {}
            for c in COLUMNS:
                v = row[c]
                if c in _INT:
                    kw[c] = int(v)
                elif c in _BOOL:
                    kw[c] = v == "1"
                elif c == "error":
                    kw[c] = v
                else:
                    kw[c] = float(v)
            out.append(CellResult(**kw))
    return out
