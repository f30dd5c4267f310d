"""Local objective models: l2-regularized logistic loss and scalar quadratics.

Each node ``i`` owns a smooth, strongly convex function ``f_i``; the network
minimizes the sum.  Models expose per-node curvature bounds ``mu_i``, ``L_i``
and their sums, which downstream convergence analysis consumes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit


class ObjectiveModel:
    """Sum-structured objective with per-node values, gradients and curvature bounds.

    Subclasses set ``n``, ``d``, ``mu_i`` and ``L_i`` and implement the stacked
    evaluations; the aggregate ``f(y) = sum_i f_i(y)`` falls out generically.
    """

    n: int
    d: int
    mu_i: np.ndarray
    L_i: np.ndarray

    @property
    def mu(self) -> float:
        """Strong convexity constant of the aggregate, the sum of the mu_i."""
        return float(self.mu_i.sum())

    @property
    def L(self) -> float:
        """Smoothness constant of the aggregate, the sum of the L_i."""
        return float(self.L_i.sum())

    def local_values(self, x: np.ndarray) -> np.ndarray:
        """Vector of f_i(x_i) for a stacked point of shape (n, d)."""
        raise NotImplementedError

    def local_grads(self, x: np.ndarray) -> np.ndarray:
        """Stack of gradients grad f_i(x_i), shape (n, d)."""
        raise NotImplementedError

    def local_value(self, i: int, y: np.ndarray) -> float:
        return float(self.local_values(self._lift(i, y))[i])

    def local_grad(self, i: int, y: np.ndarray) -> np.ndarray:
        return self.local_grads(self._lift(i, y))[i].copy()

    def value(self, y: np.ndarray) -> float:
        x = np.broadcast_to(np.asarray(y, dtype=float), (self.n, self.d))
        return float(self.local_values(x).sum())

    def grad(self, y: np.ndarray) -> np.ndarray:
        x = np.broadcast_to(np.asarray(y, dtype=float), (self.n, self.d))
        return self.local_grads(x).sum(axis=0)

    def _lift(self, i: int, y: np.ndarray) -> np.ndarray:
        if not 0 <= i < self.n:
            raise ValueError(f"node index {i} out of range")
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape != (self.d,):
            raise ValueError(f"expected a point of dimension {self.d}")
        x = np.zeros((self.n, self.d))
        x[i] = y
        return x


@dataclass(frozen=True)
class LogisticInstance:
    """Binary classification data, one sample per node, with ridge term.

    ``features`` has shape (n, d) with the last column fixed to one (intercept),
    ``labels`` is a vector of +-1, and ``reg`` is the ridge coefficient shared
    by all nodes.  ``planted`` and ``seed`` record how the data was produced.
    """

    features: np.ndarray
    labels: np.ndarray
    reg: float
    planted: Optional[np.ndarray] = None
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        a = np.array(self.features, dtype=float)
        b = np.array(self.labels, dtype=float)
        if a.ndim != 2 or a.shape[0] != b.shape[0]:
            raise ValueError("features and labels disagree on the node count")
        if not np.all(np.abs(b) == 1.0):
            raise ValueError("labels must be +-1")
        if self.reg <= 0:
            raise ValueError("ridge coefficient must be positive")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "features", a)
        object.__setattr__(self, "labels", b)
        if self.planted is not None:
            p = np.array(self.planted, dtype=float)
            p.setflags(write=False)
            object.__setattr__(self, "planted", p)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def to_json(self) -> str:
        doc = {
            "n": self.n,
            "d": self.d,
            "R": self.reg,
            "a": self.features.tolist(),
            "b": self.labels.tolist(),
            "planted": None if self.planted is None else self.planted.tolist(),
            "seed": self.seed,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "LogisticInstance":
        doc = json.loads(text)
        inst = cls(
            features=np.asarray(doc["a"], dtype=float),
            labels=np.asarray(doc["b"], dtype=float),
            reg=float(doc["R"]),
            planted=None if doc["planted"] is None else np.asarray(doc["planted"]),
            seed=doc["seed"],
        )
        if inst.n != doc["n"] or inst.d != doc["d"]:
            raise ValueError("document dimensions disagree with array shapes")
        return inst


class LogisticModel(ObjectiveModel):
    """f_i(y) = log(1 + exp(-b_i a_i^T y)) + (R / 2) ||y||^2.

    The log term is evaluated through ``logaddexp`` so large margins neither
    overflow nor lose the regularizer; curvature bounds are mu_i = R and
    L_i = R + ||a_i||^2 / 4.
    """

    def __init__(self, instance: LogisticInstance) -> None:
        self.instance = instance
        self.n = instance.n
        self.d = instance.d
        self.mu_i = np.full(self.n, instance.reg)
        self.L_i = instance.reg + (instance.features**2).sum(axis=1) / 4.0
        self.mu_i.setflags(write=False)
        self.L_i.setflags(write=False)

    def local_values(self, x: np.ndarray) -> np.ndarray:
        inst = self.instance
        t = inst.labels * np.einsum("ij,ij->i", inst.features, x)
        return np.logaddexp(0.0, -t) + 0.5 * inst.reg * (x * x).sum(axis=1)

    def local_grads(self, x: np.ndarray) -> np.ndarray:
        inst = self.instance
        t = inst.labels * np.einsum("ij,ij->i", inst.features, x)
        coef = -inst.labels * expit(-t)
        return coef[:, None] * inst.features + inst.reg * x


def logistic_local_eval(
    instance: LogisticInstance, i: int, y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Value and gradient of node i's regularized logistic loss at y."""
    model = LogisticModel(instance)
    return model.local_value(i, y), model.local_grad(i, y)


def generate_logistic_data(
    n: int,
    d: int,
    reg: float,
    rng: np.random.Generator | int,
    noise_std: float = 0.4,
) -> LogisticInstance:
    """Plant a linear separator and label one Gaussian sample per node.

    Features are d-1 standard normals plus an intercept column of ones; labels
    are the sign of the planted margin corrupted by Gaussian noise of the given
    standard deviation.  Passing an integer seeds a fresh generator and records
    the seed on the instance.
    """
    if n < 1 or d < 2:
        raise ValueError("need n >= 1 nodes and d >= 2 including the intercept")
    seed: Optional[int] = None
    if isinstance(rng, (int, np.integer)):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, d))
    a[:, -1] = 1.0
    planted = rng.standard_normal(d)
    eps = rng.normal(0.0, noise_std, n)
    b = np.where(a @ planted + eps >= 0.0, 1.0, -1.0)
    return LogisticInstance(features=a, labels=b, reg=reg, planted=planted, seed=seed)


@dataclass(frozen=True)
class QuadraticInstance:
    """Scalar quadratics f_i(y) = (y - a_i)^2 / 2 with unit curvature."""

    targets: np.ndarray

    def __post_init__(self) -> None:
        a = np.array(self.targets, dtype=float).reshape(-1)
        if a.size < 1:
            raise ValueError("need at least one target")
        a.setflags(write=False)
        object.__setattr__(self, "targets", a)

    @property
    def n(self) -> int:
        return self.targets.size


class QuadraticModel(ObjectiveModel):
    """Stacked view of the scalar quadratics; the aggregate minimizer is the target mean."""

    def __init__(self, instance: QuadraticInstance) -> None:
        self.instance = instance
        self.n = instance.n
        self.d = 1
        self.mu_i = np.ones(self.n)
        self.L_i = np.ones(self.n)
        self.mu_i.setflags(write=False)
        self.L_i.setflags(write=False)

    def local_values(self, x: np.ndarray) -> np.ndarray:
        r = x[:, 0] - self.instance.targets
        return 0.5 * r * r

    def local_grads(self, x: np.ndarray) -> np.ndarray:
        return x - self.instance.targets[:, None]


def quadratic_local_eval(
    instance: QuadraticInstance, i: int, y: float
) -> tuple[float, float]:
    """Value and derivative of node i's quadratic at the scalar point y."""
    if not 0 <= i < instance.n:
        raise ValueError(f"node index {i} out of range")
    r = float(y) - instance.targets[i]
    return 0.5 * r * r, r


@dataclass(frozen=True)
class ReferenceSolution:
    """Centralized minimizer used as ground truth by runs and experiments."""

    y_star: np.ndarray
    grad_norm: float
    x_star: np.ndarray

    def __post_init__(self) -> None:
        y = np.array(self.y_star, dtype=float)
        x = np.array(self.x_star, dtype=float)
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y_star", y)
        object.__setattr__(self, "x_star", x)


def solve_reference(
    model: ObjectiveModel,
    tol: float = 1e-10,
    y0: Optional[np.ndarray] = None,
    max_iterations: int = 500_000,
) -> ReferenceSolution:
    """Minimize the aggregate to gradient norm at most ``tol * max(1, L)``.

    Quadratic models are solved exactly through the target mean; everything
    else runs plain gradient descent with step 1/L, which the strong convexity
    requirement makes globally linearly convergent.
    """
    if model.mu <= 0.0:
        raise ValueError("reference solve requires a strongly convex aggregate")
    target = tol * max(1.0, model.L)
    if isinstance(model, QuadraticModel) and y0 is None:
        y = np.array([model.instance.targets.mean()])
    else:
        y = np.zeros(model.d) if y0 is None else np.asarray(y0, dtype=float).copy()
        step = 1.0 / model.L
        for _ in range(max_iterations):
            g = model.grad(y)
            if np.linalg.norm(g) <= target:
                break
            y = y - step * g
        else:
            raise RuntimeError("reference gradient descent did not reach tolerance")
    grad_norm = float(np.linalg.norm(model.grad(y)))
    if grad_norm > target:
        raise RuntimeError("reference solution failed its own certificate")
    return ReferenceSolution(y_star=y, grad_norm=grad_norm, x_star=np.tile(y, (model.n, 1)))
