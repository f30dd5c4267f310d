"""Convergence-constant toolkit for the gradient-tracking iteration.

Three groups of tools live here:

* gain constants for the small-gain convergence argument: given curvature
  bounds, a window contraction factor and step safeguards, build every
  derived constant, check the seven feasibility conditions, and search for a
  certified safeguard interval;
* a linear-systems oracle for the scalar quadratic benchmark driven by
  identity/averaging mixtures, exposing the iteration matrix, its diagonal
  blocks and the closed-form recursion of the spectral curvature estimate;
* post-hoc trajectory audits: remainder terms and weighted-norm inequalities
  measured on recorded runs.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from gradtrack.network import averaging_matrix, theta_mixing
from gradtrack.objective import QuadraticInstance, QuadraticModel

CONDITION_NAMES = (
    "window_contraction_below_rate",
    "centralized_step_valid",
    "mean_contraction_below_rate",
    "disagreement_gain_small",
    "tracker_loop_stable",
    "tracker_gain_small",
    "loop_gain_below_one",
)


def tau_contraction(alpha: float, mu: float, L: float) -> float:
    """Contraction factor max(|1 - alpha mu|, |1 - alpha L|) of a gradient step.

    Valid for steps in (0, 2/L); steps above 1/L still contract but sit outside
    the hypothesis under which the factor is usually quoted, so they trigger a
    warning rather than an error.
    """
    if not 0.0 < mu <= L:
        raise ValueError("need 0 < mu <= L")
    if not 0.0 < alpha < 2.0 / L:
        raise ValueError("step must lie in (0, 2/L)")
    if alpha > 1.0 / L:
        warnings.warn(
            "step in (1/L, 2/L): contraction holds but exceeds the stated hypothesis",
            stacklevel=2,
        )
    return max(abs(1.0 - alpha * mu), abs(1.0 - alpha * L))


@dataclass(frozen=True)
class TheoryConstants:
    """Inputs and derived constants of the small-gain convergence argument.

    ``lam`` is the geometric envelope rate, ``nu`` the window contraction
    factor over windows of length ``m`` and ``delta = d_max - d_min`` the step
    spread.  ``gamma`` and ``gamma1`` are the same quantity computed through
    two formula routes and must agree.
    """

    b: float
    mu: float
    L: float
    nu: float
    n: int
    m: int
    lam: float
    d_min: float
    d_max: float
    delta: float
    c_sum: float
    tau: float
    gamma: float
    beta1: float
    beta2: float
    beta3: float
    beta4: float
    beta5: float
    gamma1: float
    gamma2: float
    gamma3: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def constants(
    b: float,
    mu: float,
    L: float,
    nu: float,
    n: int,
    m: int,
    lam: float,
    d_min: float,
    d_max: float,
) -> TheoryConstants:
    """Evaluate every derived constant at one parameter point.

    Requires ``lam`` in (0, 1) with ``lam^m > nu``; a window that does not
    contract inside the envelope leaves the loop gains undefined.  A
    nonpositive denominator in the mean-error gain is reported through the
    condition check rather than raised here.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError("envelope rate must lie in (0, 1)")
    if m < 1 or n < 1:
        raise ValueError("window length and node count must be positive")
    if not 0.0 <= nu:
        raise ValueError("window contraction factor must be nonnegative")
    if d_min < 0.0 or d_max < d_min:
        raise ValueError("need 0 <= d_min <= d_max")
    if mu < 0.0 or L < mu or b < 0.0:
        raise ValueError("curvature bounds need 0 <= mu <= L and b >= 0")
    lam_m = lam**m
    if lam_m <= nu:
        raise ValueError("window contraction does not fit under the rate envelope")

    delta = d_max - d_min
    # Horner form of lam (1 - lam^m) / (1 - lam); the quotient itself cancels
    # catastrophically once the search pushes lam against 1
    c_sum = 0.0
    for _ in range(m):
        c_sum = lam * (1.0 + c_sum)
    tau = max(abs(1.0 - d_min * mu), abs(1.0 - d_min * L))
    gamma = (b + L) * c_sum / (lam_m - nu)
    gamma1 = (b + L) * float(np.sum(lam ** np.arange(1, m + 1))) / (lam_m - nu)
    if not math.isclose(gamma, gamma1, rel_tol=1e-12):
        raise AssertionError("the two loop-gain formulas disagree")

    denom3 = lam - 1.0 + mu * d_min - delta * L
    if denom3 != 0.0:
        beta1 = L * d_max / denom3
    else:
        beta1 = math.inf
    beta2 = (delta / (L * d_max)) * beta1 if delta > 0.0 else 0.0
    beta5 = c_sum * d_max / lam_m
    beta4 = L * beta5
    beta3 = nu / lam_m + beta4

    den2 = 1.0 - gamma1 * beta2
    gamma2 = (beta1 + gamma1 * beta2) / den2 if den2 > 0.0 else math.inf
    den3 = 1.0 - beta3 - gamma1 * beta5
    gamma3 = (beta4 + beta5 * gamma1) / den3 if den3 > 0.0 else math.inf

    return TheoryConstants(
        b=b,
        mu=mu,
        L=L,
        nu=nu,
        n=n,
        m=m,
        lam=lam,
        d_min=d_min,
        d_max=d_max,
        delta=delta,
        c_sum=c_sum,
        tau=tau,
        gamma=gamma,
        beta1=beta1,
        beta2=beta2,
        beta3=beta3,
        beta4=beta4,
        beta5=beta5,
        gamma1=gamma1,
        gamma2=gamma2,
        gamma3=gamma3,
    )


@dataclass(frozen=True)
class ConditionReport:
    """Slack of each feasibility condition; positive slack means satisfied."""

    margins: tuple

    @property
    def holds(self) -> tuple:
        return tuple(m > 0.0 for m in self.margins)

    @property
    def feasible(self) -> bool:
        return all(self.holds)

    def as_dict(self) -> dict:
        return {
            name: {"holds": ok, "margin": margin}
            for name, ok, margin in zip(CONDITION_NAMES, self.holds, self.margins)
        }


def check_conditions(tc: TheoryConstants) -> ConditionReport:
    """Evaluate the seven feasibility conditions with their slacks.

    Conditions whose constants are undefined because an upstream denominator
    failed get a margin of -inf so that a spuriously negative gain can never
    read as feasible.
    """
    lam_m = tc.lam**tc.m
    m1 = lam_m - tc.nu
    m2 = 2.0 / tc.L - tc.d_min / tc.n
    m3 = tc.lam - (1.0 - tc.mu * tc.d_min + tc.delta * tc.L)
    gamma_ok = m1 > 0.0

    if gamma_ok and m3 > 0.0 and math.isfinite(tc.beta2):
        m4 = 1.0 - tc.gamma * tc.beta2
    else:
        m4 = -math.inf
    m5 = 1.0 - tc.beta3
    if gamma_ok and m5 > 0.0:
        m6 = 1.0 - tc.beta5 * tc.gamma / (1.0 - tc.beta3)
    else:
        m6 = -math.inf
    if m4 > 0.0 and m6 > 0.0 and math.isfinite(tc.gamma2) and math.isfinite(tc.gamma3):
        m7 = 1.0 - tc.gamma2 * tc.gamma3
    else:
        m7 = -math.inf

    return ConditionReport(margins=(m1, m2, m3, m4, m5, m6, m7))


class FeasibilitySearchError(RuntimeError):
    """Raised when no certified safeguard interval was found within the budget."""

    def __init__(self, message: str, report: Optional[ConditionReport] = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class FeasibilityResult:
    """A certified (rate, safeguard interval) triple with its full evidence."""

    lam: float
    d_min: float
    d_max: float
    constants: TheoryConstants
    report: ConditionReport
    rounds: int

    def to_json(self) -> str:
        doc = {
            "inputs": {
                "b": self.constants.b,
                "mu": self.constants.mu,
                "L": self.constants.L,
                "nu": self.constants.nu,
                "n": self.constants.n,
                "m": self.constants.m,
            },
            "chosen": {"lambda": self.lam, "d_min": self.d_min, "d_max": self.d_max},
            "conditions": self.report.as_dict(),
            "feasible": self.report.feasible,
            "rounds": self.rounds,
        }
        return json.dumps(doc, indent=2)


def search_feasible(
    b: float,
    mu: float,
    L: float,
    nu: float,
    n: int,
    m: int,
    budget: int = 200,
) -> FeasibilityResult:
    """Construct a safeguard interval passing every feasibility condition.

    Mirrors the constructive argument: shrink d_min geometrically while closing
    the relative gap between d_max and d_min even faster, and place the rate
    envelope halfway between its lower bounds and one.  The gap must shrink
    relative to d_min, not merely with it, because the disagreement gain scales
    with the ratio of spread to mean-contraction slack, which a fixed relative
    gap leaves bounded away from zero.
    """
    if mu <= 0.0:
        raise ValueError("feasibility search requires mu > 0")
    if not 0.0 <= nu < 1.0:
        raise ValueError("window contraction factor must lie in [0, 1)")
    if L < mu or b < 0.0 or n < 1 or m < 1:
        raise ValueError("invalid curvature or dimension inputs")

    d_min = 1.0 / L
    gap = mu / (2.0 * L)
    last_report: Optional[ConditionReport] = None
    for round_idx in range(budget):
        d_max = d_min * (1.0 + gap)
        delta = d_max - d_min
        floor = max(nu ** (1.0 / m), 1.0 - mu * d_min + delta * L)
        lam = 0.5 * (1.0 + floor)
        if lam >= 1.0:
            # mu * d_min underflowed against 1; later rounds only shrink it
            raise FeasibilitySearchError(
                "rate envelope saturated at 1 before any feasible round",
                last_report,
            )
        tc = constants(b, mu, L, nu, n, m, lam, d_min, d_max)
        report = check_conditions(tc)
        if report.feasible:
            return FeasibilityResult(
                lam=lam,
                d_min=d_min,
                d_max=d_max,
                constants=tc,
                report=report,
                rounds=round_idx + 1,
            )
        last_report = report
        d_min *= 0.5
        gap *= 0.5
    raise FeasibilitySearchError(
        f"no feasible safeguard interval in {budget} rounds", last_report
    )


def small_gain_bound(gamma1: float, gamma2: float, w1: float, w2: float) -> float:
    """Bound (w1 gamma2 + w2) / (1 - gamma1 gamma2) of the coupled weighted norms.

    Only meaningful when the loop gain gamma1 * gamma2 lies in [0, 1).
    """
    loop = gamma1 * gamma2
    if not 0.0 <= loop < 1.0:
        raise ValueError("loop gain must lie in [0, 1)")
    return (w1 * gamma2 + w2) / (1.0 - loop)


@dataclass(frozen=True)
class QuadraticBenchmark:
    """Linear-systems view of the scalar quadratic benchmark.

    With targets ``a``, unit-curvature quadratics, tracker substitution
    ``z = u + grad F(x)`` and mixing ``W = (1 - theta) I + theta ee^T / n``,
    the error pair ``(q, z) = (x - x*, z)`` evolves through the block matrix

        A(theta) = [[W - ee^T/n, -alpha I], [W - I, W - alpha I]]

    provided the run starts on the invariant set ``sum(x0) = sum(a)``,
    ``u0 = 0``.  ``m1_block`` and ``mi_block`` are the 2x2 Gram blocks whose
    eigenvalues make up the spectrum of A^T A.
    """

    n: int
    alpha: float
    theta: float
    a_matrix: np.ndarray = field(repr=False)

    def matrix(self, theta: Optional[float] = None) -> np.ndarray:
        th = self.theta if theta is None else th_check(theta)
        n = self.n
        w = theta_mixing(n, th).entries
        top = np.hstack([w - averaging_matrix(n), -self.alpha * np.eye(n)])
        bottom = np.hstack([w - np.eye(n), w - self.alpha * np.eye(n)])
        return np.vstack([top, bottom])

    def spectral_norm(self, theta: Optional[float] = None) -> float:
        return float(np.linalg.norm(self.matrix(theta), 2))

    def spectral_radius(self, theta: Optional[float] = None) -> float:
        return float(np.abs(np.linalg.eigvals(self.matrix(theta))).max())

    def m1_block(self) -> np.ndarray:
        a = self.alpha
        return np.array([[a * a, a * (a - 1.0)], [a * (a - 1.0), (a - 1.0) ** 2]])

    def mi_block(self, lam_i: float) -> np.ndarray:
        a = self.alpha
        return np.array(
            [
                [lam_i**2 + a**2, lam_i**2 - (1.0 + a) * lam_i + a**2],
                [
                    lam_i**2 - (1.0 + a) * lam_i + a**2,
                    2.0 * lam_i**2 - 2.0 * (1.0 + a) * lam_i + 1.0 + a**2,
                ],
            ]
        )

    def m1_eigenvalues(self) -> np.ndarray:
        return np.sort(np.linalg.eigvalsh(self.m1_block()))

    def consensus_mode_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of A restricted to the all-ones direction: 0 and 1 - alpha.

        Note these are eigenvalues of A itself, not of the Gram block M_1,
        whose nonzero eigenvalue is 2 alpha^2 - 2 alpha + 1.
        """
        return np.array([0.0, 1.0 - self.alpha])

    def block_eigenvalues(self, theta: Optional[float] = None) -> np.ndarray:
        """Union of the Gram block spectra; equals the spectrum of A^T A."""
        th = self.theta if theta is None else theta
        eigs = list(np.linalg.eigvalsh(self.m1_block()))
        lam_i = 1.0 - th
        block = np.linalg.eigvalsh(self.mi_block(lam_i))
        eigs.extend(list(block) * (self.n - 1))
        return np.sort(np.asarray(eigs))

    def propagate(
        self, theta_seq: Sequence[float], q0: np.ndarray, z0: np.ndarray
    ) -> np.ndarray:
        """Trajectory of the stacked error pair under a sequence of mixtures."""
        xi = np.concatenate([np.asarray(q0, float).ravel(), np.asarray(z0, float).ravel()])
        if xi.size != 2 * self.n:
            raise ValueError("error pair has the wrong dimension")
        out = [xi]
        for th in theta_seq:
            xi = self.matrix(th) @ xi
            out.append(xi)
        return np.asarray(out)


def th_check(theta: float) -> float:
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    return theta


def quadratic_benchmark(theta: float, alpha: float, n: int) -> QuadraticBenchmark:
    """Build the benchmark system for one mixture parameter."""
    if n < 2:
        raise ValueError("the benchmark needs at least two nodes")
    th_check(theta)
    if alpha <= 0.0:
        raise ValueError("step must be positive")
    system = QuadraticBenchmark(n=n, alpha=alpha, theta=theta, a_matrix=np.empty(0))
    object.__setattr__(system, "a_matrix", system.matrix(theta))
    return system


def benchmark_instance(
    n: int, rng: np.random.Generator
) -> tuple[QuadraticModel, np.ndarray]:
    """Quadratic benchmark instance with an initial point on the invariant set.

    Targets are standard normal; the initial point is the target vector plus a
    mean-centered perturbation, so the sum constraint holds up to rounding and
    the trackers start at zero by construction of the engine.
    """
    a = rng.standard_normal(n)
    noise = rng.standard_normal(n)
    x0 = a + (noise - noise.mean())
    return QuadraticModel(QuadraticInstance(a)), x0.reshape(n, 1)


def sigma_recursion(
    theta_seq: Sequence[float], sigma0: float, sigma_max: float
) -> tuple[np.ndarray, Optional[int]]:
    """Closed form of the spectral curvature estimate on the quadratic benchmark.

    Before saturation the estimate follows ``hat_sigma_{k+1} = 1 + theta_k *
    hat_sigma_k`` (equivalently the nested product expansion); once it touches
    ``sigma_max`` it follows ``min(sigma_max, 1 + sigma_max theta_k)``, so any
    mixture sequence with theta above ``1 - 1/sigma_max`` keeps it saturated.
    Returns the sequence together with the first index from which the estimate
    stays at ``sigma_max`` (None if it never saturates for good).
    """
    if not 0.0 < sigma0 <= sigma_max:
        raise ValueError("bootstrap estimate must lie in (0, sigma_max]")
    values = [float(sigma0)]
    hat = float(sigma0)
    for th in theta_seq:
        th_check(th)
        # the auxiliary accumulates over the whole history, saturated or not
        hat = 1.0 + th * hat
        if values[-1] == sigma_max:
            nxt = min(sigma_max, 1.0 + sigma_max * th)
        else:
            nxt = min(sigma_max, hat)
        values.append(nxt)
    arr = np.asarray(values)
    saturated: Optional[int] = None
    if arr[-1] == sigma_max:
        idx = len(arr) - 1
        while idx > 0 and arr[idx - 1] == sigma_max:
            idx -= 1
        saturated = idx
    return arr, saturated


def weighted_running_max(values: np.ndarray, lam: float) -> np.ndarray:
    """Running maxima of ``lam^{-k} values[k]``, the weighted sequence norm."""
    values = np.asarray(values, dtype=float)
    scaled = values / lam ** np.arange(len(values))
    return np.maximum.accumulate(scaled)


def omega_diagnostics(
    tc: TheoryConstants, utilde_norms: np.ndarray, xtilde_norms: np.ndarray
) -> tuple[float, float, float]:
    """Remainder terms of the weighted-norm inequalities from a run prefix.

    These are reporting quantities only; the iteration never consumes them.
    ``utilde_norms`` and ``xtilde_norms`` must cover the first m + 1 states.
    """
    m = tc.m
    if len(utilde_norms) < m + 1 or len(xtilde_norms) < m + 1:
        raise ValueError("need the first m + 1 recorded states")
    j = np.arange(m + 1)
    w1_tilde = float((np.asarray(utilde_norms[: m + 1]) / tc.lam**j).max())
    lam_m = tc.lam**m
    omega1 = lam_m / (lam_m - tc.nu) * w1_tilde
    omega2 = tc.beta2 * omega1 / (1.0 - tc.gamma1 * tc.beta2)
    w3_tilde = float((np.asarray(xtilde_norms[: m + 1]) / tc.lam**j).max())
    omega3 = (w3_tilde + tc.beta5 * omega1) / (1.0 - tc.beta3 - tc.gamma1 * tc.beta5)
    return omega1, omega2, omega3
