"""Experiment harness: step-size grid sweeps over variants and policies.

A sweep runs every tracking variant and step policy over a logarithmic grid of
safeguard caps ``d_max``, with all nine combinations at a given grid point
sharing the same data, the same initial point and the same network stream, so
the comparison isolates the method choice.  Results serialize to a
deterministic CSV and a multi-panel SVG.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from gradtrack.method import (
    RunStatus,
    StepKind,
    StepPolicy,
    TrackingKind,
    TrackingVariant,
    run,
    uniform_x0,
)
from gradtrack.network import (
    NetworkSequence,
    connected_geometric_graph,
    metropolis_weights,
)
from gradtrack.objective import (
    LogisticModel,
    ObjectiveModel,
    QuadraticInstance,
    QuadraticModel,
    ReferenceSolution,
    generate_logistic_data,
    solve_reference,
)

log = logging.getLogger(__name__)

DEFAULT_SEEDS = (0, 1, 2, 3, 4)

# stream tags keeping the independent random draws of one experiment apart
_TAG_DATA = 11
_TAG_X0 = 23
_TAG_GRAPH = 37
_TAG_NET = 53

SWEEP_HEADER = ["variant", "policy", "d_max", "iterations", "status", "comm_vectors", "wall_ms"]
_SENTINEL_COMMENT = "# iterations is -1 unless status is CONVERGED"


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of a sweep; serializable to JSON.

    The grid is expressed in multiples of the inverse aggregate smoothness
    1/L because L depends on the generated data; ``d_max_grid`` may pin
    explicit values instead.  ``b_rule`` fixes the tracking scale of the
    non-zero variants; the default ties it to the grid point as 1/d_max.
    """

    problem: str = "logistic"
    n: int = 25
    dim: int = 10
    reg: float = 0.25
    network: str = "geometric"
    dropout: float = 0.25
    theta: float = 0.5
    radius: Optional[float] = None
    seed: int = 0
    eps: float = 1e-5
    max_iter: int = 50_000
    d_min: float = 1e-8
    grid_points: int = 30
    grid_lo: float = 1.0 / 50.0
    grid_hi: float = 10.0
    d_max_grid: Optional[tuple] = None
    variants: tuple = (
        TrackingKind.ZERO,
        TrackingKind.SCALED_IDENTITY,
        TrackingKind.SCALED_MIXING,
    )
    policies: tuple = (StepKind.CONSTANT, StepKind.SPECTRAL, StepKind.LINE_SEARCH)
    b_rule: str | float = "inverse_dmax"

    def __post_init__(self) -> None:
        if self.problem not in ("logistic", "quadratic"):
            raise ValueError("problem must be 'logistic' or 'quadratic'")
        if self.network not in ("geometric", "static", "ring", "mixing"):
            raise ValueError("unknown network kind")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.eps <= 0 or self.d_min <= 0 or self.max_iter < 0:
            raise ValueError("eps and d_min must be positive, max_iter nonnegative")
        object.__setattr__(
            self, "variants", tuple(TrackingKind(v) for v in self.variants)
        )
        object.__setattr__(self, "policies", tuple(StepKind(p) for p in self.policies))
        if self.d_max_grid is not None:
            grid = tuple(float(g) for g in self.d_max_grid)
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ValueError("explicit grid must be strictly increasing")
            if grid and grid[0] < self.d_min:
                raise ValueError("grid must not go below d_min")
            object.__setattr__(self, "d_max_grid", grid)

    @property
    def geometric_radius(self) -> float:
        if self.radius is not None:
            return self.radius
        return float(np.sqrt(np.log(self.n) / self.n))

    def resolve_grid(self, L: float) -> np.ndarray:
        if self.d_max_grid is not None:
            return np.asarray(self.d_max_grid)
        grid = np.geomspace(self.grid_lo / L, self.grid_hi / L, self.grid_points)
        if grid[0] < self.d_min:
            raise ValueError("grid bottom fell below d_min; lower d_min or raise grid_lo")
        return grid

    def to_json(self) -> str:
        doc = asdict(self)
        doc["variants"] = [v.value for v in self.variants]
        doc["policies"] = [p.value for p in self.policies]
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        doc = json.loads(text)
        if "variants" in doc:
            doc["variants"] = tuple(doc["variants"])
        if "policies" in doc:
            doc["policies"] = tuple(doc["policies"])
        if doc.get("d_max_grid") is not None:
            doc["d_max_grid"] = tuple(doc["d_max_grid"])
        return cls(**doc)


def build_default_config(seed: int = 0) -> ExperimentConfig:
    """The benchmark setup: 25 nodes, 10 features, geometric graph with dropout."""
    return ExperimentConfig(seed=seed)


def build_model(cfg: ExperimentConfig) -> ObjectiveModel:
    if cfg.problem == "logistic":
        instance = generate_logistic_data(
            cfg.n, cfg.dim, cfg.reg, np.random.default_rng([cfg.seed, _TAG_DATA])
        )
        return LogisticModel(instance)
    rng = np.random.default_rng([cfg.seed, _TAG_DATA])
    return QuadraticModel(QuadraticInstance(rng.standard_normal(cfg.n)))


def build_sequence(cfg: ExperimentConfig, stream: int = 0) -> NetworkSequence:
    """Fresh replayable network stream; ``stream`` decorrelates grid cells."""
    if cfg.network in ("geometric", "static"):
        base, _ = connected_geometric_graph(
            cfg.n, cfg.geometric_radius, seed=_stream_seed(cfg.seed, _TAG_GRAPH)
        )
        if cfg.network == "static" or cfg.dropout == 0.0:
            return NetworkSequence.static(metropolis_weights(base))
        return NetworkSequence.geometric_dropout(
            base, cfg.dropout, seed=_stream_seed(cfg.seed, stream)
        )
    if cfg.network == "ring":
        return NetworkSequence.ring(cfg.n)
    return NetworkSequence.mixing(cfg.n, cfg.theta)


def _stream_seed(seed: int, stream: int) -> int:
    # deterministic composition without Python hash randomization
    return (seed * 1_000_003 + stream * 97 + _TAG_NET) % (2**31 - 1)


def _tracking_for(cfg: ExperimentConfig, kind: TrackingKind, d_max: float) -> TrackingVariant:
    if kind == TrackingKind.ZERO:
        return TrackingVariant(kind)
    if cfg.b_rule == "inverse_dmax":
        return TrackingVariant(kind, 1.0 / d_max)
    return TrackingVariant(kind, float(cfg.b_rule))


@dataclass(frozen=True)
class CellResult:
    """Outcome of one (variant, policy, d_max) cell."""

    variant: str
    policy: str
    d_max: float
    iterations: int
    status: str
    comm_vectors: int
    wall_ms: float


@dataclass
class SweepResult:
    config: ExperimentConfig
    grid: np.ndarray
    records: list
    stream_checksums: list
    objective_L: float
    reference: ReferenceSolution


def run_sweep(cfg: ExperimentConfig, timing: bool = False) -> SweepResult:
    """Execute the full grid.

    Cells are independent given their (variant, policy, grid index) key: each
    builds a fresh network stream seeded by the grid index alone, so the nine
    method combinations face identical randomness at equal d_max, which the
    recorded stream checksums certify.  Wall times are only measured when
    ``timing`` is set, keeping the default output reproducible byte for byte.
    """
    model = build_model(cfg)
    reference = solve_reference(model)
    grid = cfg.resolve_grid(model.L)
    x0 = uniform_x0(model.n, model.d, np.random.default_rng([cfg.seed, _TAG_X0]))

    checksums: list = [None] * len(grid)
    records = []
    for variant_kind in cfg.variants:
        for policy_kind in cfg.policies:
            for gi, d_max in enumerate(grid):
                seq = build_sequence(cfg, stream=gi)
                digest = seq.checksum()
                if checksums[gi] is None:
                    checksums[gi] = digest
                elif checksums[gi] != digest:
                    raise RuntimeError("network stream differs across cells at one grid point")
                tracking = _tracking_for(cfg, variant_kind, float(d_max))
                policy = StepPolicy(policy_kind, d_min=cfg.d_min, d_max=float(d_max))
                t0 = time.perf_counter() if timing else 0.0
                traj = run(
                    model,
                    seq,
                    tracking,
                    policy,
                    x0,
                    cfg.eps,
                    cfg.max_iter,
                    reference=reference,
                )
                wall_ms = (time.perf_counter() - t0) * 1e3 if timing else 0.0
                iterations = traj.k_bar if traj.status == RunStatus.CONVERGED else -1
                records.append(
                    CellResult(
                        variant=variant_kind.value,
                        policy=policy_kind.value,
                        d_max=float(d_max),
                        iterations=int(iterations),
                        status=traj.status.value,
                        comm_vectors=traj.comm_vectors,
                        wall_ms=wall_ms,
                    )
                )
    for finding in divergence_boundary_findings(records):
        log.warning("%s", finding)
    return SweepResult(
        config=cfg,
        grid=grid,
        records=records,
        stream_checksums=checksums,
        objective_L=model.L,
        reference=reference,
    )


def divergence_boundary_findings(records) -> list:
    """Flag constant-policy cells that recover after a smaller cell diverged.

    The stability boundary can be noisy, so a non-monotone status pattern is
    reported as a finding for inspection, never as a failure.
    """
    findings = []
    variants = sorted({r.variant for r in records})
    for variant in variants:
        rows = sorted(
            (r for r in records if r.variant == variant and r.policy == "CONSTANT"),
            key=lambda r: r.d_max,
        )
        diverged_at = None
        for r in rows:
            if r.status == "DIVERGED" and diverged_at is None:
                diverged_at = r.d_max
            elif r.status != "DIVERGED" and diverged_at is not None:
                findings.append(
                    f"{variant} CONSTANT: {r.status} at d_max={r.d_max:.6g} "
                    f"above the divergence onset {diverged_at:.6g}"
                )
    return findings


def emit_csv(result: SweepResult, path) -> None:
    """One row per cell; non-converged rows carry the -1 iteration sentinel."""
    with open(path, "w", newline="") as fh:
        fh.write(_SENTINEL_COMMENT + "\n")
        writer = csv.writer(fh)
        writer.writerow(SWEEP_HEADER)
        for rec in result.records:
            writer.writerow(
                [
                    rec.variant,
                    rec.policy,
                    f"{rec.d_max:.17g}",
                    rec.iterations,
                    rec.status,
                    rec.comm_vectors,
                    f"{rec.wall_ms:.17g}",
                ]
            )


def parse_csv(path) -> list:
    """Round-trip reader for :func:`emit_csv` output."""
    records = []
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    if header != SWEEP_HEADER:
        raise ValueError("unexpected sweep CSV header")
    for row in body:
        records.append(
            CellResult(
                variant=row[0],
                policy=row[1],
                d_max=float(row[2]),
                iterations=int(row[3]),
                status=row[4],
                comm_vectors=int(row[5]),
                wall_ms=float(row[6]),
            )
        )
    return records


def largest_converged(result: SweepResult, variant: str, policy: str) -> Optional[float]:
    """Largest grid point at which the given cell family converged."""
    best = None
    for rec in result.records:
        if (
            rec.variant == variant
            and rec.policy == policy
            and rec.status == RunStatus.CONVERGED.value
        ):
            if best is None or rec.d_max > best:
                best = rec.d_max
    return best


def convergence_ratios(result: SweepResult) -> dict:
    """Per-variant stability summary of the adaptive policies.

    For each tracking variant, reports the largest converged d_max per policy
    and the grid-quantized ratios of the adaptive policies over the constant
    one (None when the constant policy never converged).
    """
    out = {}
    for variant in result.config.variants:
        v = variant.value
        const = largest_converged(result, v, StepKind.CONSTANT.value)
        spectral = largest_converged(result, v, StepKind.SPECTRAL.value)
        line = largest_converged(result, v, StepKind.LINE_SEARCH.value)
        out[v] = {
            "constant_max": const,
            "spectral_max": spectral,
            "line_search_max": line,
            "spectral_ratio": (spectral / const) if const and spectral else None,
            "line_search_ratio": (line / const) if const and line else None,
            "grid_top": float(result.grid[-1]),
        }
    return out


_RATIO_FUZZ = 1.0 - 1e-9


def meets_ratio_targets(result: SweepResult) -> tuple[bool, dict]:
    """Check the headline stability margins of the adaptive policies.

    Requires, for every variant: a finite constant-policy maximum strictly
    inside the grid; a spectral maximum at least ten times larger; and a line
    search maximum at least twice (zero tracking) or three times (scaled
    tracking) larger, all measured at grid resolution.
    """
    ratios = convergence_ratios(result)
    ok = True
    for variant, info in ratios.items():
        const = info["constant_max"]
        if const is None or const >= info["grid_top"] * _RATIO_FUZZ:
            ok = False
            continue
        if info["spectral_ratio"] is None or info["spectral_ratio"] < 10.0 * _RATIO_FUZZ:
            ok = False
        need = 2.0 if variant == TrackingKind.ZERO.value else 3.0
        if info["line_search_ratio"] is None or info["line_search_ratio"] < need * _RATIO_FUZZ:
            ok = False
    return ok, ratios


def emit_plot(result: SweepResult, path) -> None:
    """Iterations-to-target against d_max, one panel per tracking variant.

    Non-converged cells appear as markers pinned to the top border.  Uses a
    figure object directly so no global pyplot state is touched.
    """
    from matplotlib.figure import Figure

    variants = [v.value for v in result.config.variants]
    policies = [p.value for p in result.config.policies]
    fig = Figure(figsize=(4.0 * max(len(variants), 1), 3.4))
    axes = fig.subplots(1, max(len(variants), 1), squeeze=False)[0]
    top = max(result.config.max_iter, 2)
    colors = {"CONSTANT": "C0", "SPECTRAL": "C1", "LINE_SEARCH": "C2"}
    for ax, variant in zip(axes, variants or ["empty"]):
        ax.set_xscale("log")
        ax.set_yscale("log")
        if len(result.grid):
            ax.set_xlim(float(result.grid[0]), float(result.grid[-1]))
        ax.set_ylim(1, top)
        ax.set_title(f"tracking {variant}", fontsize=9)
        ax.set_xlabel("d_max")
        for policy in policies:
            rows = [
                r
                for r in result.records
                if r.variant == variant and r.policy == policy
            ]
            rows.sort(key=lambda r: r.d_max)
            good = [(r.d_max, r.iterations) for r in rows if r.iterations >= 1]
            bad = [r.d_max for r in rows if r.iterations < 1]
            color = colors.get(policy, "C3")
            if good:
                xs, ys = zip(*good)
                ax.plot(xs, ys, marker="o", ms=3, lw=1, color=color, label=policy)
            if bad:
                ax.plot(
                    bad,
                    [top] * len(bad),
                    linestyle="none",
                    marker="x",
                    ms=4,
                    color=color,
                )
    axes[0].set_ylabel("iterations to target")
    if variants and axes[0].get_legend_handles_labels()[0]:
        axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
