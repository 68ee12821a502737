"""Mission orchestration, benchmark protocols, and result persistence.

A mission senses, fuses, plans, and moves until the budget is exhausted,
recording a per-step log. Benchmarks sweep missions over planners, repeat
seeds, and either fixed (static) or per-mission-sampled (varying)
hyperparameters, and aggregate metric means and across-seed deviations.

Seed discipline: one master seed deterministically derives independent
streams for field synthesis, start pose and hyperparameter sampling, sensor
noise, and each planner, so different planners face identical worlds and
measurement noise. All written artifacts are byte-reproducible; wall-clock
replanning times are kept out of them unless explicitly requested.
"""

from __future__ import annotations

import concurrent.futures
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
from threadpoolctl import threadpool_limits

from . import belief_maps, grid_world, planners, reward_metrics, sensors, unified
from .belief_maps import (
    GaussianMapBelief,
    MapBelief,
    MaternKernel,
    OccupancyMapBelief,
    entropy_nats,
    gp_fuse,
    gp_init,
    occ_fuse,
    occ_init,
)
from .errors import ConfigurationError, IppError, NumericalError
from .grid_world import (
    ContinuousInterest,
    DiscreteInterest,
    FieldKind,
    GridGeometry,
    InterestSpec,
    TerrainField,
    generate_continuous_field,
    generate_discrete_field,
    interest_mask,
    load_raster,
)
from .planners import (
    ACTION_COST,
    Action,
    CmaesConfig,
    MctsConfig,
    PlannerConfig,
    apply_action,
    cmaes_plan,
    coverage_plan,
    greedy_plan,
    mcts_plan,
)
from .reward_metrics import (
    MetricsRecord,
    UncertaintyTrace,
    classification_metrics,
    ii_metric,
    mll_metric,
    rmse_metric,
    step_reward,
    unc_metric,
)
from .sensors import (
    ConfusionMatrix,
    ContinuousSensorModel,
    FieldOfView,
    Pose,
    sense_continuous,
    sense_semantic,
)
from .unified import Hyperparams, assemble_state

PLANNER_NAMES = ("greedy", "mcts", "cmaes", "coverage")

SUMMARY_COLUMNS = (
    "planner",
    "protocol",
    "II",
    "Unc",
    "MLL",
    "RMSE",
    "mIoU",
    "F1",
    "replan_time_s",
)


@dataclass(frozen=True)
class MissionConfig:
    """Complete specification of one mission."""

    kind: FieldKind
    geometry: GridGeometry
    seed: int = 0
    budget: float = 100.0
    planner: str = "greedy"
    correlation_length: float = 0.35
    raster_path: str | None = None
    f_th: float = 0.4
    interesting_classes: tuple[int, ...] = (1,)
    lengthscale: float = 0.35
    signal_variance: float = 1.0
    prior_mean: float = 0.5
    noise_variance: float = 0.04
    noise_std: float = 0.2
    num_classes: int = 3
    log_trace_uncertainty: bool = True
    confusion_diagonal: float = 0.8
    confusion: tuple[tuple[float, ...], ...] | None = None
    clamp: tuple[float, float] = (0.01, 0.99)
    half_extent: int | None = None
    start: tuple[int, int] | None = None
    planner_config: PlannerConfig | None = None

    def __post_init__(self) -> None:
        if self.budget <= 0:
            raise ConfigurationError("budget must be > 0")
        if self.planner not in PLANNER_NAMES:
            raise ConfigurationError(f"unknown planner {self.planner!r}")

    @property
    def fov(self) -> FieldOfView:
        if self.half_extent is not None:
            return FieldOfView(self.half_extent)
        # point sensor for continuous missions, image-like FoV for semantic ones
        return FieldOfView(0 if self.kind is FieldKind.CONTINUOUS else 2)

    def default_coverage_step(self) -> int:
        """Row spacing that lets the sweep span the grid within the budget."""
        sweeps = max(2, int(self.budget // self.geometry.width))
        return max(1, round((self.geometry.height - 1) / (sweeps - 1)))

    def confusion_matrix(self) -> ConfusionMatrix:
        if self.confusion is not None:
            return ConfusionMatrix(np.asarray(self.confusion, dtype=np.float64))
        return ConfusionMatrix.with_diagonal(self.num_classes, self.confusion_diagonal)

    def interest_spec(self) -> InterestSpec:
        if self.kind is FieldKind.CONTINUOUS:
            return ContinuousInterest(self.f_th)
        return DiscreteInterest(self.interesting_classes, self.num_classes)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["geometry"] = {"width": self.geometry.width, "height": self.geometry.height}
        pc = d.pop("planner_config")
        if pc is not None:
            pc.pop("confusion", None)
            pc["fov"] = pc["fov"]["half_extent"]
            d["planner_config"] = pc
        return d

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "MissionConfig":
        d = dict(d)
        kind = FieldKind(d.pop("kind", "continuous"))
        geom = d.pop("geometry", {"width": 25, "height": 25})
        geometry = GridGeometry(int(geom["width"]), int(geom["height"]))
        for key in ("interesting_classes", "clamp", "start"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        if d.get("confusion") is not None:
            d["confusion"] = tuple(tuple(row) for row in d["confusion"])
        pc = d.pop("planner_config", None)
        cfg = MissionConfig(kind=kind, geometry=geometry, **d)
        if pc is not None:
            cfg = replace(cfg, planner_config=_planner_config_from_dict(pc))
        return cfg


def _planner_config_from_dict(d: dict[str, Any]) -> PlannerConfig:
    d = dict(d)
    mcts = MctsConfig(**d.pop("mcts", {}))
    cmaes = CmaesConfig(**d.pop("cmaes", {}))
    fov = d.pop("fov", None)
    kwargs: dict[str, Any] = {"mcts": mcts, "cmaes": cmaes, **d}
    if fov is not None:
        kwargs["fov"] = FieldOfView(int(fov))
    return PlannerConfig(**kwargs)


@dataclass(frozen=True)
class StepRecord:
    step: int
    pose: Pose
    action: str
    consumed_budget: float
    reward: float
    normalized_uncertainty: float


@dataclass
class EpisodeLog:
    """Per-step mission record plus final metrics.

    ``replan_seconds`` holds measured wall-clock per decision; it is kept out
    of the deterministic CSV serialization.
    """

    config: dict[str, Any]
    steps: list[StepRecord]
    metrics: MetricsRecord | None
    replan_seconds: list[float]
    valid: bool = True

    def trace(self) -> UncertaintyTrace:
        return UncertaintyTrace(
            np.array([s.consumed_budget for s in self.steps]),
            np.array([s.normalized_uncertainty for s in self.steps]),
        )

    def mean_replan_seconds(self) -> float:
        return float(np.mean(self.replan_seconds)) if self.replan_seconds else 0.0

    def csv_text(self) -> str:
        lines = ["step,pose_x,pose_y,action,consumed_budget,reward,normalized_uncertainty"]
        for s in self.steps:
            lines.append(
                f"{s.step},{s.pose.cell_x},{s.pose.cell_y},{s.action},"
                f"{repr(float(s.consumed_budget))},{repr(float(s.reward))},"
                f"{repr(float(s.normalized_uncertainty))}"
            )
        return "\n".join(lines) + "\n"


def build_field(config: MissionConfig) -> TerrainField:
    if config.raster_path is not None:
        return load_raster(config.raster_path, config.kind)
    if config.kind is FieldKind.CONTINUOUS:
        return generate_continuous_field(
            config.seed, config.geometry, config.correlation_length
        )
    return generate_discrete_field(
        config.seed, config.geometry, config.num_classes, config.correlation_length
    )


def _mission_streams(config: MissionConfig) -> tuple[np.random.Generator, np.random.Generator]:
    """(sensor stream, planner stream); the planner stream mixes in the planner
    name so worlds and measurement noise stay shared across planners."""
    sensor = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    planner_idx = PLANNER_NAMES.index(config.planner)
    planner = np.random.default_rng(np.random.SeedSequence([config.seed, 2, planner_idx]))
    return sensor, planner


def _start_pose(config: MissionConfig) -> Pose:
    if config.start is not None:
        return Pose(*config.start).validate(config.geometry)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 3]))
    return Pose(
        int(rng.integers(config.geometry.width)),
        int(rng.integers(config.geometry.height)),
    )


def _planner_setup(config: MissionConfig) -> PlannerConfig:
    base = config.planner_config if config.planner_config is not None else PlannerConfig()
    confusion = config.confusion_matrix() if config.kind is FieldKind.DISCRETE else None
    return replace(base, fov=config.fov, confusion=confusion, seed=config.seed)


def _normalized_uncertainty(
    belief: MapBelief, prior_total: float, flat_mask: np.ndarray, log_trace: bool
) -> float:
    if isinstance(belief, GaussianMapBelief):
        trace = float(belief.variance()[flat_mask].sum())
        if log_trace and prior_total > 1.0:
            return float(np.log(trace) / np.log(prior_total))
        return trace / prior_total
    return float(entropy_nats(belief.probs[flat_mask]).sum() / prior_total)


def run_mission(config: MissionConfig) -> EpisodeLog:
    """Execute one mission; fully deterministic in the config seed.

    Loop per step: sense at the current pose, fuse, assemble the planning
    state, plan, execute the action (clamped), decrement the budget, record.
    Numerical failures abort the mission and flag the partial log invalid.
    """
    # The linear algebra here is many small dense ops; BLAS thread fan-out
    # costs more than it saves, so keep missions single-threaded and
    # parallelize across missions instead.
    with threadpool_limits(limits=1):
        return _run_mission_inner(config)


def _run_mission_inner(config: MissionConfig) -> EpisodeLog:
    field_truth = build_field(config)
    spec = config.interest_spec()
    mask = interest_mask(field_truth, spec)
    flat_mask = mask.ravel()
    if config.kind is FieldKind.CONTINUOUS:
        kernel = MaternKernel(config.lengthscale, config.signal_variance)
        belief: MapBelief = gp_init(
            config.geometry, kernel, config.prior_mean, config.noise_variance
        )
        hp = Hyperparams.for_spec(spec, lengthscale=config.lengthscale)
    else:
        belief = occ_init(config.geometry, config.num_classes, config.clamp)
        hp = Hyperparams.for_spec(spec)
    prior = belief.clone()
    if isinstance(prior, GaussianMapBelief):
        prior_total = float(prior.variance()[flat_mask].sum())
    else:
        prior_total = float(entropy_nats(prior.probs[flat_mask]).sum())

    sensor_rng, planner_rng = _mission_streams(config)
    planner_cfg = _planner_setup(config)
    confusion = config.confusion_matrix() if config.kind is FieldKind.DISCRETE else None
    sensor_model = ContinuousSensorModel(config.noise_std)
    pose = _start_pose(config)
    n_steps = int(config.budget / ACTION_COST)
    coverage_actions = (
        coverage_plan(
            config.geometry,
            pose,
            planner_cfg.coverage_step or config.default_coverage_step(),
            n_steps,
        )
        if config.planner == "coverage"
        else None
    )

    steps = [StepRecord(0, pose, "", 0.0, 0.0, 1.0)]
    replan_seconds: list[float] = []
    remaining = float(config.budget)
    valid = True
    metrics: MetricsRecord | None = None
    try:
        for t in range(1, n_steps + 1):
            if config.kind is FieldKind.CONTINUOUS:
                m = sense_continuous(
                    field_truth, pose, config.fov, sensor_model, sensor_rng, step=t
                )
                fused = gp_fuse(belief, m)
            else:
                m = sense_semantic(
                    field_truth, pose, config.fov, confusion, sensor_rng, step=t
                )
                fused = occ_fuse(belief, m, confusion)
            reward = step_reward(belief, fused, spec)
            belief = fused
            state = assemble_state(belief, spec, pose, remaining, hp)
            start_time = time.perf_counter()
            if coverage_actions is not None:
                action = coverage_actions[t - 1]
            elif config.planner == "greedy":
                action = greedy_plan(state, belief, spec, planner_cfg)
            elif config.planner == "mcts":
                action = mcts_plan(state, belief, spec, planner_cfg, planner_rng)
            else:
                action = cmaes_plan(state, belief, spec, planner_cfg, planner_rng)
            replan_seconds.append(time.perf_counter() - start_time)
            pose = apply_action(config.geometry, pose, action)
            remaining -= ACTION_COST
            steps.append(
                StepRecord(
                    t,
                    pose,
                    action.name,
                    config.budget - remaining,
                    reward,
                    _normalized_uncertainty(
                        belief, prior_total, flat_mask, config.log_trace_uncertainty
                    ),
                )
            )
    except NumericalError:
        valid = False

    log = EpisodeLog(config.to_dict(), steps, metrics, replan_seconds, valid)
    if valid:
        log.metrics = _final_metrics(config, belief, prior, field_truth, mask, log)
    return log


def _final_metrics(
    config: MissionConfig,
    belief: MapBelief,
    prior: MapBelief,
    field_truth: TerrainField,
    mask: np.ndarray,
    log: EpisodeLog,
) -> MetricsRecord:
    ii = ii_metric(log.trace(), config.budget)
    unc = unc_metric(
        belief,
        prior,
        mask,
        use_log_trace=config.log_trace_uncertainty
        and isinstance(belief, GaussianMapBelief),
    )
    if isinstance(belief, GaussianMapBelief):
        return MetricsRecord(
            ii=ii,
            unc_final=unc,
            rmse=rmse_metric(belief, field_truth, mask),
            mll=mll_metric(belief, field_truth, mask),
        )
    miou, f1 = classification_metrics(belief, field_truth, mask)
    return MetricsRecord(ii=ii, unc_final=unc, miou=miou, f1=f1)


@dataclass(frozen=True)
class BenchmarkConfig:
    """Sweep definition: protocol, mission count, repeat seeds, planners."""

    kind: FieldKind = FieldKind.CONTINUOUS
    protocol: str = "static"
    missions: int = 100
    seeds: tuple[int, ...] = (0, 1, 2)
    planners: tuple[str, ...] = ("greedy", "mcts", "cmaes", "coverage")
    master_seed: int = 0
    geometry: GridGeometry = GridGeometry(25, 25)
    budget: float = 100.0
    static_f_th: float = 0.4
    static_lengthscale: float = 0.35
    f_th_range: tuple[float, float] = (0.0, 0.8)
    lengthscale_range: tuple[float, float] = (0.15, 0.55)
    num_classes: int = 3
    planner_config: PlannerConfig | None = None
    mission_overrides: dict[str, Any] = field(default_factory=dict)
    record_timings: bool = False
    parallel: int = 1

    def __post_init__(self) -> None:
        if self.protocol not in ("static", "varying"):
            raise ConfigurationError(f"unknown protocol {self.protocol!r}")
        if self.missions < 1:
            raise ConfigurationError("mission count must be >= 1")
        if self.f_th_range[0] >= self.f_th_range[1]:
            raise ConfigurationError("f_th range must be non-degenerate")
        if self.lengthscale_range[0] >= self.lengthscale_range[1]:
            raise ConfigurationError("lengthscale range must be non-degenerate")
        unknown = set(self.planners) - set(PLANNER_NAMES)
        if unknown:
            raise ConfigurationError(f"unknown planners {sorted(unknown)}")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["geometry"] = {"width": self.geometry.width, "height": self.geometry.height}
        pc = d.pop("planner_config")
        if pc is not None:
            pc.pop("confusion", None)
            pc["fov"] = pc["fov"]["half_extent"]
            d["planner_config"] = pc
        return d

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "BenchmarkConfig":
        d = dict(d)
        kind = FieldKind(d.pop("kind", "continuous"))
        geom = d.pop("geometry", {"width": 25, "height": 25})
        geometry = GridGeometry(int(geom["width"]), int(geom["height"]))
        for key in ("seeds", "planners", "f_th_range", "lengthscale_range"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        pc = d.pop("planner_config", None)
        cfg = BenchmarkConfig(kind=kind, geometry=geometry, **d)
        if pc is not None:
            cfg = replace(cfg, planner_config=_planner_config_from_dict(pc))
        return cfg


def mission_for(
    config: BenchmarkConfig, planner: str, repeat_seed: int, mission_index: int
) -> MissionConfig:
    """Derive one mission from the benchmark protocol.

    World-defining randomness (field seed, hyperparameters, start pose)
    depends only on (master seed, repeat seed, mission index), never on the
    planner, so planners compete on identical missions.
    """
    entropy = np.random.SeedSequence(
        [config.master_seed, repeat_seed, mission_index]
    ).generate_state(2)
    mission_seed = int(entropy[0])
    hp_rng = np.random.default_rng(int(entropy[1]))
    if config.kind is FieldKind.CONTINUOUS:
        if config.protocol == "static":
            f_th, lengthscale = config.static_f_th, config.static_lengthscale
        else:
            f_th = float(hp_rng.uniform(*config.f_th_range))
            lengthscale = float(hp_rng.uniform(*config.lengthscale_range))
        fields: dict[str, Any] = {
            "f_th": f_th,
            "lengthscale": lengthscale,
            "correlation_length": lengthscale,
        }
    else:
        if config.protocol == "static":
            classes: tuple[int, ...] = (1,)
            correlation = config.static_lengthscale
        else:
            size = int(hp_rng.integers(1, config.num_classes + 1))
            ids = hp_rng.choice(config.num_classes, size=size, replace=False) + 1
            classes = tuple(int(c) for c in sorted(ids))
            correlation = float(hp_rng.uniform(*config.lengthscale_range))
        fields = {
            "interesting_classes": classes,
            "num_classes": config.num_classes,
            "correlation_length": correlation,
        }
    fields.update(config.mission_overrides)
    return MissionConfig(
        kind=config.kind,
        geometry=config.geometry,
        seed=mission_seed,
        budget=config.budget,
        planner=planner,
        planner_config=config.planner_config,
        **fields,
    )


@dataclass(frozen=True)
class PlannerSummary:
    planner: str
    protocol: str
    means: dict[str, float]
    stds: dict[str, float]
    replan_time_s: float
    episodes: int
    invalid: int


@dataclass(frozen=True)
class RunSummary:
    config: dict[str, Any]
    rows: tuple[PlannerSummary, ...]


def _metric_dict(metrics: MetricsRecord) -> dict[str, float]:
    out = {"II": metrics.ii, "Unc": metrics.unc_final}
    if metrics.rmse is not None:
        out["RMSE"] = metrics.rmse
        out["MLL"] = metrics.mll
    if metrics.miou is not None:
        out["mIoU"] = metrics.miou
        out["F1"] = metrics.f1
    return out


def run_benchmark(
    config: BenchmarkConfig, keep_logs: bool = False
) -> tuple[RunSummary, dict[str, EpisodeLog]]:
    """Run the full planner x seed x mission sweep and aggregate metrics.

    Per-seed mission means are averaged across seeds; the reported std is the
    across-seed deviation of those means. Invalid episodes are excluded from
    aggregation and counted. Returns the summary plus episode logs keyed by
    ``planner/seed/mission`` (logs retained only when ``keep_logs``).
    """
    tasks = [
        (planner, seed, mission)
        for planner in config.planners
        for seed in config.seeds
        for mission in range(config.missions)
    ]
    results: dict[tuple[str, int, int], EpisodeLog] = {}
    if config.parallel > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.parallel) as pool:
            futures = {
                pool.submit(run_mission, mission_for(config, planner, seed, mission)): (
                    planner,
                    seed,
                    mission,
                )
                for planner, seed, mission in tasks
            }
            for fut in concurrent.futures.as_completed(futures):
                results[futures[fut]] = fut.result()
    else:
        for planner, seed, mission in tasks:
            results[(planner, seed, mission)] = run_mission(
                mission_for(config, planner, seed, mission)
            )

    rows = []
    logs: dict[str, EpisodeLog] = {}
    for planner in config.planners:
        per_seed: list[dict[str, float]] = []
        times: list[float] = []
        invalid = 0
        episodes = 0
        for seed in config.seeds:
            seed_metrics: list[dict[str, float]] = []
            for mission in range(config.missions):
                log = results[(planner, seed, mission)]
                if keep_logs:
                    logs[f"{planner}_seed{seed}_mission{mission:04d}"] = log
                if not log.valid or log.metrics is None:
                    invalid += 1
                    continue
                episodes += 1
                seed_metrics.append(_metric_dict(log.metrics))
                if log.replan_seconds:
                    times.append(log.mean_replan_seconds())
            if seed_metrics:
                keys = seed_metrics[0].keys()
                per_seed.append(
                    {k: float(np.mean([m[k] for m in seed_metrics])) for k in keys}
                )
        if per_seed:
            keys = per_seed[0].keys()
            means = {k: float(np.mean([s[k] for s in per_seed])) for k in keys}
            stds = {k: float(np.std([s[k] for s in per_seed])) for k in keys}
        else:
            means, stds = {}, {}
        rows.append(
            PlannerSummary(
                planner=planner,
                protocol=config.protocol,
                means=means,
                stds=stds,
                replan_time_s=float(np.mean(times)) if times else 0.0,
                episodes=episodes,
                invalid=invalid,
            )
        )
    return RunSummary(config.to_dict(), tuple(rows)), logs


def write_results(
    summary: RunSummary,
    logs: dict[str, EpisodeLog],
    out_dir: str | Path,
    record_timings: bool = False,
) -> list[Path]:
    """Write summary.csv, per-episode CSV logs, and the config snapshot.

    Artifacts are byte-deterministic for a fixed (config, master seed):
    measured wall-clock flows into summary.csv and timings.csv only when
    ``record_timings`` is set.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    lines = [",".join(SUMMARY_COLUMNS)]
    for row in summary.rows:
        time_s = repr(round(row.replan_time_s, 6)) if record_timings else "0.0"
        cells = [row.planner, row.protocol]
        for key in ("II", "Unc", "MLL", "RMSE", "mIoU", "F1"):
            cells.append("" if key not in row.means else repr(row.means[key]))
        cells.append(time_s)
        lines.append(",".join(cells))
    summary_path = out_dir / "summary.csv"
    summary_path.write_text("\n".join(lines) + "\n")
    written.append(summary_path)

    std_lines = [",".join(SUMMARY_COLUMNS[:-1])]
    for row in summary.rows:
        cells = [row.planner, row.protocol]
        for key in ("II", "Unc", "MLL", "RMSE", "mIoU", "F1"):
            cells.append("" if key not in row.stds else repr(row.stds[key]))
        std_lines.append(",".join(cells))
    std_path = out_dir / "summary_std.csv"
    std_path.write_text("\n".join(std_lines) + "\n")
    written.append(std_path)

    config_path = out_dir / "config.json"
    config_path.write_text(json.dumps(summary.config, sort_keys=True, indent=2) + "\n")
    written.append(config_path)

    if logs:
        episode_dir = out_dir / "episodes"
        episode_dir.mkdir(exist_ok=True)
        for name in sorted(logs):
            path = episode_dir / f"{name}.csv"
            path.write_text(logs[name].csv_text())
            written.append(path)
        if record_timings:
            t_lines = ["episode,mean_replan_seconds"]
            for name in sorted(logs):
                t_lines.append(f"{name},{repr(round(logs[name].mean_replan_seconds(), 6))}")
            t_path = out_dir / "timings.csv"
            t_path.write_text("\n".join(t_lines) + "\n")
            written.append(t_path)
    return written
