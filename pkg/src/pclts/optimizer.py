"""Derivative-free global minimisation with random restarts.

Two methods are provided: Nelder-Mead simplex search restarted from random
points, and DE/rand/1/bin differential evolution.  Both only ever see the
objective through an :class:`ObjectiveHandle`, which enforces the evaluation
budget, maps non-finite values to ``+inf`` and records the running best.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, TextIO

import numpy as np

from .errors import ConfigurationError

METHODS = ("nelder_mead_restart", "differential_evolution")
DE_WEIGHT = 0.7
DE_CROSSOVER = 0.9


class BudgetExhausted(Exception):
    """Raised by an ObjectiveHandle asked for one evaluation too many."""


class ObjectiveHandle:
    """Budgeted, counting wrapper around a black-box objective R^d -> R.

    ``trace`` holds ``(eval_index, best_f)`` every time the running best
    improves; eval indices are 1-based.  When ``stream`` is given, the same
    pairs are written to it as ``"<index> <best_f>"`` lines.
    """

    def __init__(
        self,
        fn: Callable[[np.ndarray], float],
        dimension: int,
        budget: Optional[int] = None,
        stream: Optional[TextIO] = None,
    ):
        if dimension < 1:
            raise ConfigurationError(f"dimension must be >= 1, got {dimension}")
        self.fn = fn
        self.dimension = int(dimension)
        self.budget = budget
        self.stream = stream
        self.eval_count = 0
        self.best_x: Optional[np.ndarray] = None
        self.best_f = math.inf
        self.trace: List[tuple] = []

    @property
    def remaining(self) -> float:
        return math.inf if self.budget is None else self.budget - self.eval_count

    def __call__(self, x) -> float:
        if self.budget is not None and self.eval_count >= self.budget:
            raise BudgetExhausted
        x = np.array(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ConfigurationError(f"expected a point of dimension {self.dimension}, got shape {x.shape}")
        self.eval_count += 1
        with np.errstate(all="ignore"):
            try:
                f = float(self.fn(x))
            except (OverflowError, FloatingPointError, ZeroDivisionError):
                f = math.inf
        if not math.isfinite(f):
            f = math.inf
        if f < self.best_f:
            self._improve(self.eval_count, x, f)
        return f

    evaluate = __call__

    def _improve(self, index, x, f):
        self.best_f = f
        self.best_x = x
        self.trace.append((index, f))
        if self.stream is not None:
            self.stream.write(f"{index} {f!r}\n")

    def child(self, budget: int) -> "ObjectiveHandle":
        return ObjectiveHandle(self.fn, self.dimension, budget=budget)

    def absorb(self, child: "ObjectiveHandle") -> None:
        """Fold a finished child run into this handle's counters and trace."""
        offset = self.eval_count
        for index, f in child.trace:
            if f < self.best_f:
                self._improve(offset + index, child.best_x if f == child.best_f else None, f)
        if child.best_f <= self.best_f and child.best_x is not None:
            self.best_x = child.best_x
        self.eval_count += child.eval_count


@dataclass(frozen=True)
class OptimizerSpec:
    method: str = "nelder_mead_restart"
    restarts: int = 20
    budget: int = 100_000
    init_box: float = 0.5
    seed: int = 0
    tolerance: float = 1e-8
    population: Optional[int] = None  # differential evolution only; None = automatic

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown optimizer method {self.method!r}; choose from {METHODS}")
        if self.restarts < 1:
            raise ConfigurationError(f"restarts must be >= 1, got {self.restarts}")
        if self.budget < 1:
            raise ConfigurationError(f"budget must be >= 1, got {self.budget}")
        if not self.init_box > 0:
            raise ConfigurationError(f"init_box must be > 0, got {self.init_box}")
        if not self.tolerance > 0:
            raise ConfigurationError(f"tolerance must be > 0, got {self.tolerance}")
        if self.population is not None and self.population < 4:
            raise ConfigurationError(f"population must be >= 4, got {self.population}")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "restarts": self.restarts,
            "budget": self.budget,
            "init_box": self.init_box,
            "seed": self.seed,
            "tolerance": self.tolerance,
            "population": self.population,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerSpec":
        types = {"method": str, "restarts": int, "budget": int, "init_box": float,
                 "seed": int, "tolerance": float, "population": int}
        unknown = set(d) - set(types)
        if unknown:
            raise ConfigurationError(f"unknown optimizer keys: {sorted(unknown)}")
        return cls(**{k: types[k](v) for k, v in d.items() if v is not None})


@dataclass
class RestartRecord:
    start: np.ndarray
    start_f: float
    final_x: np.ndarray
    final_f: float
    evals: int


@dataclass
class OptResult:
    best_x: np.ndarray
    best_f: float
    evals_used: int
    restarts: List[RestartRecord] = field(default_factory=list)

    def same_as(self, other: "OptResult") -> bool:
        """Bit-for-bit equality of everything the run produced."""
        if self.best_f != other.best_f or self.evals_used != other.evals_used:
            return False
        if not np.array_equal(self.best_x, other.best_x) or len(self.restarts) != len(other.restarts):
            return False
        return all(
            np.array_equal(a.start, b.start) and np.array_equal(a.final_x, b.final_x)
            and a.final_f == b.final_f and a.evals == b.evals
            for a, b in zip(self.restarts, other.restarts)
        )


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("PCLTS_THREADS", "1")))
    except ValueError:
        return 1


def restart_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, index])


def split_budget(budget: int, parts: int) -> List[int]:
    base, extra = divmod(budget, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def minimize(obj, spec: OptimizerSpec, workers: Optional[int] = None) -> OptResult:
    """Best point over ``spec.restarts`` independent runs sharing ``spec.budget``.

    The budget is split evenly between restarts, earlier restarts taking the
    remainder; a restart whose share cannot hold a simplex just evaluates its
    random start.
    Restart ``i`` draws from its own generator seeded by ``(seed, i)``, so the
    outcome does not depend on ``workers``.
    """
    if not isinstance(obj, ObjectiveHandle):
        raise ConfigurationError("minimize needs an ObjectiveHandle (it carries the dimension)")
    total = spec.budget if obj.budget is None else min(spec.budget, obj.remaining)
    slices = split_budget(int(total), spec.restarts)
    workers = default_workers() if workers is None else max(1, int(workers))

    def run(i):
        child = obj.child(slices[i])
        if slices[i] == 0:
            return child, None
        rng = restart_rng(spec.seed, i)
        if spec.method == "nelder_mead_restart":
            record = _nelder_mead_restart(child, spec, rng)
        else:
            record = _de_restart(child, spec, rng)
        return child, record

    if workers > 1 and spec.restarts > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, range(spec.restarts)))
    else:
        outcomes = [run(i) for i in range(spec.restarts)]

    records = []
    for child, record in outcomes:
        obj.absorb(child)
        if record is not None:
            records.append(record)
    best = min(records, key=lambda r: r.final_f)  # min() keeps the earliest on ties
    return OptResult(best.final_x.copy(), best.final_f, sum(r.evals for r in records), records)


def _nelder_mead_restart(handle: ObjectiveHandle, spec: OptimizerSpec, rng) -> RestartRecord:
    d = handle.dimension
    start = rng.uniform(-spec.init_box, spec.init_box, d)
    f_start = handle(start)
    x, f = start, f_start
    step = 0.1 * spec.init_box
    # relaunch from the incumbent with a fresh simplex while that still pays off
    while handle.remaining >= d + 2:
        x_new, f_new = nelder_mead(handle, x, handle.remaining, spec.tolerance, step=step, f_start=f)
        gain = f - f_new
        x, f = x_new, f_new
        if not gain > spec.tolerance:
            break
    return RestartRecord(start, f_start, np.asarray(x), f, handle.eval_count)


def _de_restart(handle: ObjectiveHandle, spec: OptimizerSpec, rng) -> RestartRecord:
    x, f, pop0, f0 = _differential_evolution(handle, spec, rng, None, handle.budget)
    i0 = int(np.argmin(f0)) if len(f0) else 0
    start = pop0[i0] if len(pop0) else x
    start_f = f0[i0] if len(f0) else f
    return RestartRecord(start, float(start_f), x, f, handle.eval_count)


class _Stop(Exception):
    pass


def nelder_mead(obj, start, budget: int, tolerance: float = 1e-8, step=None, f_start=None):
    """Nelder-Mead simplex minimisation from ``start``.

    Uses the dimension-adapted coefficients of Gao & Han (2012), which reduce
    to the classical (1, 2, 1/2, 1/2) in two dimensions.  Stops when the spread
    of function values over the simplex drops below ``tolerance`` or after
    ``budget`` evaluations (a supplied ``f_start`` is not counted).
    Returns the best point evaluated and its value.
    """
    x0 = np.array(start, dtype=float).ravel()
    d = x0.size
    if budget < d + 2 - (f_start is not None):
        raise ConfigurationError(f"budget {budget} too small for a simplex in {d} dimensions")

    used = 0
    best = [x0, math.inf]

    def f(x):
        nonlocal used
        if used >= budget:
            raise _Stop
        try:
            val = obj(x)
        except BudgetExhausted:
            raise _Stop from None
        used += 1
        if not math.isfinite(val):
            val = math.inf
        if val < best[1]:
            best[0], best[1] = x, val
        return val

    alpha, chi = 1.0, 1.0 + 2.0 / d
    gamma, sigma = 0.75 - 1.0 / (2 * d), 1.0 - 1.0 / d
    if d == 1:
        chi, gamma, sigma = 2.0, 0.5, 0.5

    if step is None:
        steps = np.where(x0 != 0, 0.05 * np.abs(x0), 0.00025)
    else:
        steps = np.broadcast_to(np.asarray(step, dtype=float), (d,))

    try:
        if f_start is None:
            f0 = f(x0)
        else:
            f0 = float(f_start)
            best[0], best[1] = x0, f0
        sim = np.empty((d + 1, d))
        fs = np.empty(d + 1)
        sim[0], fs[0] = x0, f0
        for k in range(d):
            v = x0.copy()
            v[k] += steps[k]
            sim[k + 1] = v
            fs[k + 1] = f(v)

        while True:
            order = np.argsort(fs, kind="stable")
            sim, fs = sim[order], fs[order]
            # an all-inf simplex has nothing left to learn
            if fs[0] == math.inf or fs[-1] - fs[0] < tolerance:
                break
            xbar = sim[:-1].mean(axis=0)
            xr = xbar + alpha * (xbar - sim[-1])
            fr = f(xr)
            if fr < fs[0]:
                xe = xbar + chi * (xr - xbar)
                fe = f(xe)
                if fe < fr:
                    sim[-1], fs[-1] = xe, fe
                else:
                    sim[-1], fs[-1] = xr, fr
                continue
            if fr < fs[-2]:
                sim[-1], fs[-1] = xr, fr
                continue
            if fr < fs[-1]:
                xc = xbar + gamma * (xr - xbar)
                fc = f(xc)
                if fc <= fr:
                    sim[-1], fs[-1] = xc, fc
                    continue
            else:
                xc = xbar - gamma * (xbar - sim[-1])
                fc = f(xc)
                if fc < fs[-1]:
                    sim[-1], fs[-1] = xc, fc
                    continue
            for j in range(1, d + 1):
                sim[j] = sim[0] + sigma * (sim[j] - sim[0])
                fs[j] = f(sim[j])
    except _Stop:
        pass
    return np.array(best[0]), float(best[1])


def default_population(d: int) -> int:
    return int(min(max(4, 5 * d), 60))


def differential_evolution(obj, spec: OptimizerSpec, rng=None, population=None, budget=None):
    """DE/rand/1/bin with weight 0.7 and crossover rate 0.9.

    ``population`` optionally supplies the initial members (one per row);
    otherwise ``spec.population`` (or an automatic size) members are drawn
    uniformly from the ``init_box`` cube.  Selection is greedy per member, so
    the best member is never lost.  Stops after ``budget`` evaluations
    (default ``spec.budget``) or once every member's value lies within
    ``spec.tolerance`` of the best.  Returns ``(x, f)``.
    """
    if rng is None:
        rng = restart_rng(spec.seed, 0)
    budget = spec.budget if budget is None else budget
    x, f, _, _ = _differential_evolution(obj, spec, rng, population, budget)
    return x, f


def _differential_evolution(obj, spec, rng, population, budget):
    if population is not None:
        pop = np.array(population, dtype=float)
        d = pop.shape[1]
    else:
        d = obj.dimension
        size = spec.population or default_population(d)
        pop = rng.uniform(-spec.init_box, spec.init_box, (size, d))
    size = pop.shape[0]
    if size < 4:
        raise ConfigurationError(f"DE needs at least 4 members, got {size}")

    used = 0

    def f(x):
        nonlocal used
        if used >= budget:
            raise _Stop
        try:
            val = obj(x)
        except BudgetExhausted:
            raise _Stop from None
        used += 1
        return val if math.isfinite(val) else math.inf

    fit = np.full(size, math.inf)
    pop0 = pop.copy()
    try:
        for i in range(size):
            fit[i] = f(pop[i])
    except _Stop:
        pass
    fit0 = fit.copy()

    others = np.arange(size - 1)
    try:
        while used < budget:
            if np.all(np.isfinite(fit)) and fit.max() - fit.min() < spec.tolerance:
                break
            for i in range(size):
                # three distinct donors, all different from i
                r1, r2, r3 = rng.choice(others, 3, replace=False)
                r1, r2, r3 = (r + (r >= i) for r in (r1, r2, r3))
                mutant = pop[r1] + DE_WEIGHT * (pop[r2] - pop[r3])
                cross = rng.random(d) < DE_CROSSOVER
                cross[rng.integers(d)] = True
                trial = np.where(cross, mutant, pop[i])
                ft = f(trial)
                if ft <= fit[i]:
                    pop[i], fit[i] = trial, ft
    except _Stop:
        pass
    ib = int(np.argmin(fit))
    return pop[ib].copy(), float(fit[ib]), pop0, fit0


def with_budget(spec: OptimizerSpec, budget: int) -> OptimizerSpec:
    return replace(spec, budget=budget)
