"""One-hidden-layer regression network with logistic hidden units.

The flat parameter vector is laid out as::

    theta = [ v_1 .. v_mh,  c,  w_11 .. w_1m b_1,  ...,  w_mh1 .. w_mhm b_mh ]

where ``v`` are hidden-to-output weights, ``c`` the output bias and each
hidden unit ``j`` owns a row ``(w_j1, ..., w_jm, b_j)`` of input weights
followed by its bias.  The model is

    f(x) = sum_j v_j * sigmoid(w_j . x + b_j) + c
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, StructuralError, TrainingError

MODEL_FORMAT = "pclts-model"


@dataclass(frozen=True)
class NetworkShape:
    inputs: int
    hidden: int

    def __post_init__(self):
        if int(self.inputs) != self.inputs or self.inputs < 1:
            raise ConfigurationError(f"inputs must be a positive integer, got {self.inputs}")
        if int(self.hidden) != self.hidden or self.hidden < 1:
            raise ConfigurationError(f"hidden must be a positive integer, got {self.hidden}")

    @property
    def n_params(self) -> int:
        m, mh = self.inputs, self.hidden
        return (m + 1) * mh + mh + 1


@dataclass(frozen=True, eq=False)
class NetworkParams:
    shape: NetworkShape
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).ravel()
        if theta.size != self.shape.n_params:
            raise StructuralError(
                f"theta has {theta.size} entries, shape {self.shape} needs {self.shape.n_params}"
            )
        if not np.all(np.isfinite(theta)):
            raise StructuralError("theta contains non-finite entries")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)

    def __eq__(self, other):
        if not isinstance(other, NetworkParams):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.theta, other.theta)

    # views into theta
    @property
    def output_weights(self) -> np.ndarray:
        return self.theta[: self.shape.hidden]

    @property
    def output_bias(self) -> float:
        return float(self.theta[self.shape.hidden])

    @property
    def input_weights(self) -> np.ndarray:
        """(hidden, inputs) matrix of input-to-hidden weights."""
        return self._rows()[:, :-1]

    @property
    def input_biases(self) -> np.ndarray:
        return self._rows()[:, -1]

    def _rows(self):
        mh, m = self.shape.hidden, self.shape.inputs
        return self.theta[mh + 1 :].reshape(mh, m + 1)

    @classmethod
    def from_parts(cls, output_weights, output_bias, input_weights, input_biases):
        """Assemble parameters from the per-layer arrays."""
        W = np.atleast_2d(np.asarray(input_weights, dtype=float))
        mh, m = W.shape
        rows = np.column_stack([W, np.asarray(input_biases, dtype=float).reshape(mh)])
        theta = np.concatenate([np.asarray(output_weights, dtype=float).reshape(mh), [output_bias], rows.ravel()])
        return cls(NetworkShape(m, mh), theta)

    def with_theta(self, theta) -> "NetworkParams":
        return NetworkParams(self.shape, theta)

    # serialization
    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "inputs": self.shape.inputs,
            "hidden": self.shape.hidden,
            "theta": [float(t) for t in self.theta],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkParams":
        if d.get("format") != MODEL_FORMAT:
            raise StructuralError(f"not a model description (format={d.get('format')!r})")
        return cls(NetworkShape(int(d["inputs"]), int(d["hidden"])), np.asarray(d["theta"], dtype=float))

    def save(self, path) -> None:
        # json writes floats with repr(), which round-trips binary64 exactly
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "NetworkParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Rows of (x, y) with optional ground-truth outlier labels."""

    x: np.ndarray
    y: np.ndarray
    outlier_truth: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y = np.array(self.y, dtype=float).ravel()
        if x.ndim != 2:
            raise StructuralError(f"x must be a matrix, got {x.ndim} dimensions")
        if x.shape[0] < 1:
            raise StructuralError("dataset must contain at least one row")
        if x.shape[0] != y.size:
            raise StructuralError(f"x has {x.shape[0]} rows but y has {y.size} entries")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise StructuralError("dataset contains non-finite values")
        truth = self.outlier_truth
        if truth is not None:
            truth = np.array(truth, dtype=bool).ravel()
            if truth.size != y.size:
                raise StructuralError(f"outlier_truth has {truth.size} entries, expected {y.size}")
            truth.flags.writeable = False
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "outlier_truth", truth)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def m(self) -> int:
        return self.x.shape[1]

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        if (self.outlier_truth is None) != (other.outlier_truth is None):
            return False
        same_truth = self.outlier_truth is None or np.array_equal(self.outlier_truth, other.outlier_truth)
        return (
            self.x.shape == other.x.shape
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and same_truth
        )

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        truth = None if self.outlier_truth is None else self.outlier_truth[rows]
        return Dataset(self.x[rows], self.y[rows], truth)


def init_params(shape: NetworkShape, seed=None, scale: float = 0.5) -> NetworkParams:
    """Uniform random weights on [-scale, scale]."""
    rng = np.random.default_rng(seed)
    return NetworkParams(shape, rng.uniform(-scale, scale, shape.n_params))


def _unpack(theta, m, mh):
    v = theta[:mh]
    c = theta[mh]
    rows = theta[mh + 1 :].reshape(mh, m + 1)
    return v, c, rows[:, :m], rows[:, m]


def _check_x(params: NetworkParams, X: np.ndarray):
    if X.shape[1] != params.shape.inputs:
        raise StructuralError(f"network expects {params.shape.inputs} inputs, data has {X.shape[1]} columns")


def hidden_activations(theta, X, m, mh):
    _, _, W, b = _unpack(theta, m, mh)
    return expit(X @ W.T + b)


def predict_theta(theta, X, m, mh):
    """Vectorised network output on the rows of ``X`` for a raw parameter vector."""
    v, c, W, b = _unpack(theta, m, mh)
    return expit(X @ W.T + b) @ v + c


def predict(params: NetworkParams, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_x(params, X)
    return predict_theta(params.theta, X, params.shape.inputs, params.shape.hidden)


def forward(params: NetworkParams, x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != params.shape.inputs:
        raise StructuralError(f"network expects {params.shape.inputs} inputs, got {x.size}")
    return float(predict(params, x[None, :])[0])


def residuals(params: NetworkParams, data: Dataset) -> np.ndarray:
    """r_i = f(x_i) - y_i, in row order."""
    _check_x(params, data.x)
    return predict_theta(params.theta, data.x, params.shape.inputs, params.shape.hidden) - data.y


def ols_loss(params: NetworkParams, data: Dataset) -> float:
    r = residuals(params, data)
    return float(r @ r)


def _loss_and_grad(theta, X, y, m, mh):
    v, c, W, b = _unpack(theta, m, mh)
    H = expit(X @ W.T + b)
    r = H @ v + c - y
    d = 2.0 * r
    # d/dz of sigmoid is H(1-H); back through the output weights
    dz = (d[:, None] * v) * H * (1.0 - H)
    grad = np.empty_like(theta)
    grad[:mh] = H.T @ d
    grad[mh] = d.sum()
    rows = grad[mh + 1 :].reshape(mh, m + 1)
    rows[:, :m] = dz.T @ X
    rows[:, m] = dz.sum(axis=0)
    return float(r @ r), grad


def ols_gradient(params: NetworkParams, data: Dataset) -> np.ndarray:
    """Exact gradient of the sum of squared residuals w.r.t. ``params.theta``."""
    _check_x(params, data.x)
    return _loss_and_grad(params.theta, data.x, data.y, params.shape.inputs, params.shape.hidden)[1]


def fit_ols(
    params0: NetworkParams,
    data: Dataset,
    steps: int = 100,
    rate: float = 1.0,
    method: str = "bfgs",
    grad_tol: float = 1e-10,
    callback: Optional[Callable[[int, float], None]] = None,
) -> NetworkParams:
    """Least-squares backpropagation training.

    Every method only ever accepts a step that does not increase the loss; a
    rejected trial halves the step length.  ``method="bfgs"`` is a quasi-Newton
    iteration with a backtracking line search started at ``rate``;
    ``method="gd"`` is full-batch gradient descent on the mean squared residual
    whose rate grows by 10% after an accepted step.

    ``callback(step, loss)`` is called with the loss of every accepted iterate,
    starting with step 0 for ``params0``.
    """
    if steps < 0:
        raise ConfigurationError(f"steps must be >= 0, got {steps}")
    if rate <= 0:
        raise ConfigurationError(f"rate must be positive, got {rate}")
    _check_x(params0, data.x)
    m, mh = params0.shape.inputs, params0.shape.hidden
    X, y = data.x, data.y

    def evaluate(theta):
        with np.errstate(over="ignore", invalid="ignore"):
            return _loss_and_grad(theta, X, y, m, mh)

    theta = params0.theta.copy()
    f, g = evaluate(theta)
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise TrainingError("non-finite loss at the initial parameters", step=0)
    if callback is not None:
        callback(0, f)
    if steps == 0:
        return params0

    if method == "bfgs":
        theta = _bfgs(evaluate, theta, f, g, steps, rate, grad_tol, callback)
    elif method == "gd":
        theta = _gd(evaluate, theta, f, g, steps, rate, data.n, callback)
    else:
        raise ConfigurationError(f"unknown fit_ols method {method!r}")
    if not np.all(np.isfinite(theta)):
        raise TrainingError("non-finite parameters after training", step=steps)
    return params0.with_theta(theta)


def _gd(evaluate, theta, f, g, steps, rate, n, callback):
    for k in range(1, steps + 1):
        trial = theta - (rate / n) * g
        ft, gt = evaluate(trial)
        if math.isfinite(ft) and ft <= f:
            if not np.all(np.isfinite(gt)):
                raise TrainingError("non-finite gradient", step=k)
            theta, f, g = trial, ft, gt
            rate *= 1.1
            if callback is not None:
                callback(k, f)
        else:
            rate *= 0.5
            if rate < 1e-300:
                break
    return theta


def _bfgs(evaluate, theta, f, g, steps, rate, grad_tol, callback):
    d = theta.size
    Hinv = np.eye(d)
    fresh = True
    for k in range(1, steps + 1):
        if f == 0.0 or np.max(np.abs(g)) <= grad_tol:
            break
        p = -Hinv @ g
        slope = float(g @ p)
        if not slope < 0:
            Hinv, fresh = np.eye(d), True
            p = -g
            slope = -float(g @ g)
        step = rate
        accepted = False
        while step * np.max(np.abs(p)) > 1e-14 * (1.0 + np.max(np.abs(theta))):
            trial = theta + step * p
            ft, gt = evaluate(trial)
            if math.isfinite(ft) and ft <= f + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if fresh:
                break
            # stale curvature model; retry from steepest descent
            Hinv, fresh = np.eye(d), True
            continue
        if not np.all(np.isfinite(gt)):
            raise TrainingError("non-finite gradient", step=k)
        s_vec = trial - theta
        y_vec = gt - g
        sy = float(s_vec @ y_vec)
        if sy > 1e-12 * float(y_vec @ y_vec):
            Hy = Hinv @ y_vec
            Hinv = (
                Hinv
                + ((sy + y_vec @ Hy) / sy**2) * np.outer(s_vec, s_vec)
                - (np.outer(Hy, s_vec) + np.outer(s_vec, Hy)) / sy
            )
            fresh = False
        theta, f, g = trial, ft, gt
        if callback is not None:
            callback(k, f)
    return theta
