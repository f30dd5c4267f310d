"""Gradient tracking with pluggable tracking term and per-node step policies.

The engine iterates, for stacked variables ``x`` and trackers ``u`` of shape
(n, d),

    x+ = W x - D (u + grad F(x))
    u+ = u + (W - I)(grad F(x) + u - B x)

where ``W`` is the doubly stochastic mixing matrix of the current iteration,
``D`` holds one step size per node, and the tracking term ``B`` is zero, a
scaled identity ``b I`` or a scaled mixing ``b W``.  Trackers start at zero,
and because the rows of ``W - I`` average to zero the tracker mean stays zero
at every iteration for every choice of ``B``.

Step sizes come from three interchangeable policies: a shared constant, a
curvature-matching spectral rule fed by neighbor displacement exchange, and a
per-node backtracking line search along the tracked direction.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from gradtrack.network import ConsensusMatrix, NetworkSequence
from gradtrack.objective import ObjectiveModel, ReferenceSolution, solve_reference

logger = logging.getLogger(__name__)

_STOCHASTIC_CHECK_TOL = 1e-9


class TrackingKind(str, Enum):
    ZERO = "ZERO"
    SCALED_IDENTITY = "SCALED_IDENTITY"
    SCALED_MIXING = "SCALED_MIXING"


@dataclass(frozen=True)
class TrackingVariant:
    """Choice of tracking term ``B`` with its fixed scale ``b >= 0``.

    The scale must not depend on the step sizes of the current run; rules that
    tie ``b`` to ``1/alpha`` change the fixed point and are out of scope.
    """

    kind: TrackingKind
    b: float = 0.0

    def __post_init__(self) -> None:
        if self.b < 0.0:
            raise ValueError("tracking scale must be nonnegative")
        if self.kind == TrackingKind.ZERO and self.b != 0.0:
            raise ValueError("the zero tracking term has no scale")

    def correction(self, x: np.ndarray, mixed_x: np.ndarray):
        """The product B x, reusing W x when B is the scaled mixing."""
        if self.kind == TrackingKind.ZERO:
            return 0.0
        if self.kind == TrackingKind.SCALED_IDENTITY:
            return self.b * x
        return self.b * mixed_x


class StepKind(str, Enum):
    CONSTANT = "CONSTANT"
    SPECTRAL = "SPECTRAL"
    LINE_SEARCH = "LINE_SEARCH"


@dataclass(frozen=True)
class StepPolicy:
    """Per-node step selection rule with safeguard interval [d_min, d_max].

    Every emitted step lies inside the safeguard interval.  For the spectral
    rule the interval maps to curvature bounds sigma in [1/d_max, 1/d_min];
    ``sigma0`` overrides the bootstrap curvature used before any displacement
    information exists (default 1/d_max).
    """

    kind: StepKind
    d_min: float
    d_max: float
    armijo_c: float = 1e-3
    backtrack: float = 0.5
    sigma0: Optional[float] = None

    def __post_init__(self) -> None:
        if self.d_min <= 0.0 or self.d_max < self.d_min:
            raise ValueError("need 0 < d_min <= d_max")
        if self.kind != StepKind.SPECTRAL and not math.isfinite(self.d_max):
            raise ValueError("only the spectral rule tolerates an unbounded d_max")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtracking factor must lie in (0, 1)")
        if not 0.0 < self.armijo_c < 1.0:
            raise ValueError("sufficient-decrease constant must lie in (0, 1)")
        if self.sigma0 is not None and not 0.0 < self.sigma0 <= self.sigma_max:
            raise ValueError("bootstrap curvature must lie in (0, sigma_max]")

    @property
    def sigma_min(self) -> float:
        return 0.0 if math.isinf(self.d_max) else 1.0 / self.d_max

    @property
    def sigma_max(self) -> float:
        return 1.0 / self.d_min

    def bootstrap_sigma(self) -> float:
        if self.sigma0 is not None:
            return self.sigma0
        if not math.isfinite(self.d_max):
            raise ValueError("an unbounded d_max needs an explicit bootstrap curvature")
        return 1.0 / self.d_max


@dataclass
class IterateState:
    """Stacked iterate, tracker and iteration counter."""

    x: np.ndarray
    u: np.ndarray
    k: int = 0

    @property
    def x_mean(self) -> np.ndarray:
        return self.x.mean(axis=0)

    @property
    def u_mean(self) -> np.ndarray:
        return self.u.mean(axis=0)

    @property
    def disagreement(self) -> np.ndarray:
        return self.x - self.x_mean


def init_state(model: ObjectiveModel, x0: np.ndarray) -> IterateState:
    """Start from an arbitrary stacked point with trackers at zero."""
    x = np.asarray(x0, dtype=float)
    if x.ndim == 1:
        if x.size != model.n * model.d:
            raise ValueError("flat initial point has the wrong length")
        x = x.reshape(model.n, model.d)
    if x.shape != (model.n, model.d):
        raise ValueError(f"initial point must have shape ({model.n}, {model.d})")
    return IterateState(x=x.copy(), u=np.zeros_like(x), k=0)


def _mixing_entries(w) -> np.ndarray:
    entries = getattr(w, "entries", w)
    entries = np.asarray(entries, dtype=float)
    if np.abs(entries.sum(axis=1) - 1.0).max() > _STOCHASTIC_CHECK_TOL:
        raise ValueError("mixing matrix is not row stochastic")
    if np.abs(entries.sum(axis=0) - 1.0).max() > _STOCHASTIC_CHECK_TOL:
        raise ValueError("mixing matrix is not column stochastic")
    return entries


def iterate(
    state: IterateState,
    w: ConsensusMatrix | np.ndarray,
    tracking: TrackingVariant,
    steps: np.ndarray,
    model: ObjectiveModel,
    grads: Optional[np.ndarray] = None,
) -> IterateState:
    """One simultaneous update of iterate and tracker.

    ``steps`` holds one step size per node; ``grads`` may pass precomputed
    gradients at the current iterate to avoid a second evaluation.
    """
    entries = _mixing_entries(w)
    steps = np.asarray(steps, dtype=float)
    if steps.shape != (model.n,):
        raise ValueError("need one step size per node")
    g = model.local_grads(state.x) if grads is None else grads
    mixed_x = entries @ state.x
    direction = state.u + g
    inner = direction - tracking.correction(state.x, mixed_x)
    x_new = mixed_x - steps[:, None] * direction
    u_new = state.u + entries @ inner - inner
    return IterateState(x=x_new, u=u_new, k=state.k + 1)


def constant_steps(policy: StepPolicy, n: int) -> np.ndarray:
    """Every node uses d_max; uncoordination enters only through the policies below."""
    if policy.kind != StepKind.CONSTANT:
        raise ValueError("policy is not the constant rule")
    return np.full(n, policy.d_max)


def spectral_steps(
    policy: StepPolicy,
    sigma_prev: np.ndarray,
    s_prev: np.ndarray,
    y_prev: np.ndarray,
    w: ConsensusMatrix | np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Curvature-matching rule from displacement and gradient differences.

    Node i combines the Rayleigh quotient of its own displacement
    ``s_i = x_i^k - x_i^{k-1}`` against ``y_i = grad f_i(x_i^k) -
    grad f_i(x_i^{k-1})`` with a consensus correction built from neighbors'
    displacements (one extra d-vector broadcast per out-edge):

        sigma_i = P[(s_i.y_i)/(s_i.s_i)
                    + sigma_i_prev * sum_j w_ij (1 - (s_i.s_j)/(s_i.s_i))]

    projected onto [sigma_min, sigma_max]; steps are 1/sigma.  Nodes with a
    vanishing displacement keep their previous curvature estimate.
    """
    entries = np.asarray(getattr(w, "entries", w), dtype=float)
    ss = (s_prev * s_prev).sum(axis=1)
    sy = (s_prev * y_prev).sum(axis=1)
    moved = ss > 0.0
    ss_safe = np.where(moved, ss, 1.0)
    gram = s_prev @ s_prev.T
    neighbor = (entries * (1.0 - gram / ss_safe[:, None])).sum(axis=1)
    raw = np.where(moved, sy / ss_safe + sigma_prev * neighbor, sigma_prev)
    sigma = np.clip(raw, policy.sigma_min, policy.sigma_max)
    with np.errstate(divide="ignore"):
        steps = 1.0 / sigma
    return steps, sigma


def line_search_steps(
    policy: StepPolicy,
    state: IterateState,
    w: ConsensusMatrix | np.ndarray,
    model: ObjectiveModel,
    grads: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Per-node backtracking along the tracked direction z_i = u_i + grad f_i(x_i).

    Starting from d_max and halving, node i accepts the largest trial d with

        f_i(sum_j w_ij x_j - d z_i) <= f_i(x_i) - c d grad f_i(x_i)^T z_i

    and falls back to d_min when the trial drops below it or when the tracked
    direction is not a descent direction for the local function.
    """
    entries = np.asarray(getattr(w, "entries", w), dtype=float)
    g = model.local_grads(state.x) if grads is None else grads
    z = state.u + g
    base = entries @ state.x
    f0 = model.local_values(state.x)
    slope = (g * z).sum(axis=1)
    steps = np.full(model.n, policy.d_min)
    active = slope > 0.0
    if not active.all():
        logger.debug(
            "line search: %d node(s) lack local descent, floored at d_min",
            int((~active).sum()),
        )
    d = policy.d_max
    while d >= policy.d_min and active.any():
        trial = base - d * z
        accept = active & (model.local_values(trial) <= f0 - policy.armijo_c * d * slope)
        steps[accept] = d
        active &= ~accept
        d *= policy.backtrack
    if active.any():
        logger.debug(
            "line search: %d node(s) exhausted backtracking, floored at d_min",
            int(active.sum()),
        )
    return steps


class RunStatus(str, Enum):
    CONVERGED = "CONVERGED"
    DIVERGED = "DIVERGED"
    MAXITER = "MAXITER"


@dataclass
class Trajectory:
    """Per-iteration record of a run.

    State-indexed arrays (``err_max`` through ``u_mean``) have one entry per
    visited state including the initial one; the step statistics and the
    communication increments have one entry per executed iteration.  The
    communication counter charges, per directed edge and iteration, one
    d-vector for the iterate exchange, one for the tracker exchange, one more
    when the tracking term itself needs mixed iterates, and one more when the
    spectral rule broadcasts displacements.
    """

    status: RunStatus
    k_bar: Optional[int]
    iterations: int
    err_max: np.ndarray
    mean_err: np.ndarray
    disagreement: np.ndarray
    tracker_err: np.ndarray
    u_mean: np.ndarray
    step_min: np.ndarray
    step_max: np.ndarray
    comm_increments: np.ndarray
    comm_vectors: int
    sigma: Optional[np.ndarray]
    final_state: IterateState
    eps: float

    @property
    def comm_cumulative(self) -> np.ndarray:
        out = np.zeros(len(self.err_max), dtype=np.int64)
        if self.iterations:
            out[1 : self.iterations + 1] = np.cumsum(self.comm_increments)
        return out


def vectors_per_edge(tracking: TrackingVariant, policy: StepPolicy) -> int:
    """d-vectors sent over each directed edge in one iteration."""
    count = 2
    if tracking.kind == TrackingKind.SCALED_MIXING:
        count += 1
    if policy.kind == StepKind.SPECTRAL:
        count += 1
    return count


def run(
    model: ObjectiveModel,
    networks: NetworkSequence,
    tracking: TrackingVariant,
    policy: StepPolicy,
    x0: np.ndarray,
    eps: float,
    max_iter: int,
    reference: Optional[ReferenceSolution] = None,
) -> Trajectory:
    """Drive the iteration until the error target, divergence or the budget.

    Stops with CONVERGED at the first state where ``max_i ||x_i - y*|| < eps``,
    with DIVERGED once any iterate norm exceeds ``1e6 (1 + ||x*||)`` or turns
    non-finite, and with MAXITER after ``max_iter`` iterations.
    """
    if eps <= 0.0:
        raise ValueError("stopping tolerance must be positive")
    if max_iter < 0:
        raise ValueError("iteration budget must be nonnegative")
    ref = solve_reference(model) if reference is None else reference
    state = init_state(model, x0)
    grad_star = model.local_grads(ref.x_star)
    blowup = 1e6 * (1.0 + np.linalg.norm(ref.x_star))

    err_max: list[float] = []
    mean_err: list[float] = []
    disagreement: list[float] = []
    tracker_err: list[float] = []
    u_mean: list[float] = []
    step_min: list[float] = []
    step_max: list[float] = []
    comm_increments: list[int] = []
    sigma_hist: list[np.ndarray] = []

    per_edge = vectors_per_edge(tracking, policy)
    sigma = None
    if policy.kind == StepKind.SPECTRAL:
        sigma = np.full(model.n, policy.bootstrap_sigma())
    prev_x: Optional[np.ndarray] = None
    prev_g: Optional[np.ndarray] = None
    g = model.local_grads(state.x)
    status: RunStatus
    k_bar: Optional[int] = None

    while True:
        node_err = np.linalg.norm(state.x - ref.y_star[None, :], axis=1)
        node_norm = np.linalg.norm(state.x, axis=1)
        finite = bool(np.isfinite(state.x).all() and np.isfinite(state.u).all())
        err_max.append(float(node_err.max()) if finite else float("inf"))
        mean_err.append(float(np.linalg.norm(state.x_mean - ref.y_star)))
        disagreement.append(float(np.linalg.norm(state.disagreement)))
        tracker_err.append(float(np.linalg.norm(state.u + grad_star)))
        u_mean.append(float(np.linalg.norm(state.u_mean)))

        if finite and err_max[-1] < eps:
            status = RunStatus.CONVERGED
            k_bar = state.k
            break
        if not finite or node_norm.max() > blowup:
            status = RunStatus.DIVERGED
            break
        if state.k >= max_iter:
            status = RunStatus.MAXITER
            break

        w = networks.matrix_at(state.k)
        if policy.kind == StepKind.CONSTANT:
            steps = constant_steps(policy, model.n)
        elif policy.kind == StepKind.SPECTRAL:
            if state.k == 0:
                with np.errstate(divide="ignore"):
                    steps = 1.0 / sigma
            else:
                steps, sigma = spectral_steps(
                    policy, sigma, state.x - prev_x, g - prev_g, w
                )
            sigma_hist.append(sigma.copy())
        else:
            steps = line_search_steps(policy, state, w, model, grads=g)
        step_min.append(float(steps.min()))
        step_max.append(float(steps.max()))
        comm_increments.append(w.graph.edge_count * per_edge)

        prev_x, prev_g = state.x, g
        state = iterate(state, w, tracking, steps, model, grads=g)
        g = model.local_grads(state.x)

    return Trajectory(
        status=status,
        k_bar=k_bar,
        iterations=len(step_min),
        err_max=np.asarray(err_max),
        mean_err=np.asarray(mean_err),
        disagreement=np.asarray(disagreement),
        tracker_err=np.asarray(tracker_err),
        u_mean=np.asarray(u_mean),
        step_min=np.asarray(step_min),
        step_max=np.asarray(step_max),
        comm_increments=np.asarray(comm_increments, dtype=np.int64),
        comm_vectors=int(sum(comm_increments)),
        sigma=np.asarray(sigma_hist) if sigma_hist else None,
        final_state=state,
        eps=eps,
    )


def uniform_x0(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Initial stacked point with components uniform on [0, 1]."""
    return rng.random((n, d))


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write the per-iteration record; step columns are empty on the final row."""
    comm = traj.comm_cumulative
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "k",
                "err_max",
                "mean_err",
                "disagreement",
                "tracker_err",
                "d_min_used",
                "d_max_used",
                "comm_vectors",
            ]
        )
        for k in range(len(traj.err_max)):
            has_step = k < traj.iterations
            writer.writerow(
                [
                    k,
                    f"{traj.err_max[k]:.17g}",
                    f"{traj.mean_err[k]:.17g}",
                    f"{traj.disagreement[k]:.17g}",
                    f"{traj.tracker_err[k]:.17g}",
                    f"{traj.step_min[k]:.17g}" if has_step else "",
                    f"{traj.step_max[k]:.17g}" if has_step else "",
                    int(comm[k]),
                ]
            )


def rlinear_certificate(
    err: np.ndarray, tail: float = 0.5, lag: int = 10
) -> tuple[float, float]:
    """Empirical R-linear rate over the trailing part of an error sequence.

    Returns ``(rho, slope)`` where ``slope`` is the least-squares slope of
    ``log err`` against the iteration index over the tail window and ``rho``
    is the largest observed ``lag``-step contraction, taken to the 1/lag power.
    A converged run should show ``rho < 1`` and a negative slope.
    """
    values = np.asarray(err, dtype=float)
    if len(values) < lag + 2:
        raise ValueError("sequence too short for a rate certificate")
    start = int(len(values) * (1.0 - tail))
    window = np.clip(values[start:], 1e-300, None)
    ks = np.arange(start, len(values))
    slope = float(np.polyfit(ks, np.log(window), 1)[0])
    ratios = window[lag:] / window[:-lag]
    rho = float(ratios.max() ** (1.0 / lag))
    return rho, slope
