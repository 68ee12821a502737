"""Service handlers: the single implementation behind both the HTTP routes
and the CLI's in-process mode."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .. import __version__
from ..belief_maps import GaussianMapBelief, entropy_nats, gp_fuse, gp_init, occ_fuse, occ_init
from ..errors import ConfigurationError
from ..grid_world import FieldKind
from ..harness import (
    ACTION_COST,
    BenchmarkConfig,
    MissionConfig,
    run_benchmark,
    run_mission,
    write_results,
)
from ..render import render_heatmap
from ..sensors import ContinuousSensorModel, sense_continuous, sense_semantic
from ..unified import assemble_state, export_state_raster
from . import schemas


def health() -> schemas.HealthResponse:
    return schemas.HealthResponse(status="ok", version=__version__)


def run_mission_handler(req: schemas.MissionRunRequest) -> schemas.MissionRunResponse:
    config = MissionConfig.from_dict(req.config.to_core_dict())
    log = run_mission(config)
    files: list[str] = []
    if req.out_dir is not None:
        out_dir = Path(req.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        episode_path = out_dir / "episode.csv"
        episode_path.write_text(log.csv_text())
        files.append(str(episode_path))
        if log.metrics is not None:
            metrics_path = out_dir / "metrics.csv"
            metrics_path.write_text(
                ",".join(log.metrics.CSV_COLUMNS) + "\n" + ",".join(log.metrics.csv_row()) + "\n"
            )
            files.append(str(metrics_path))
        if req.record_timings:
            t_path = out_dir / "timings.csv"
            t_path.write_text(
                "mean_replan_seconds\n" + repr(round(log.mean_replan_seconds(), 6)) + "\n"
            )
            files.append(str(t_path))
    metrics = {}
    if log.metrics is not None:
        for name, value in zip(log.metrics.CSV_COLUMNS, log.metrics.csv_row()):
            if value:
                metrics[name] = float(value)
    return schemas.MissionRunResponse(
        valid=log.valid,
        num_actions=len(log.steps) - 1,
        metrics=metrics,
        mean_replan_seconds=log.mean_replan_seconds(),
        steps=[
            schemas.StepModel(
                step=s.step,
                pose=[s.pose.cell_x, s.pose.cell_y],
                action=s.action,
                consumed_budget=s.consumed_budget,
                reward=s.reward,
                normalized_uncertainty=s.normalized_uncertainty,
            )
            for s in log.steps
        ],
        files=files,
    )


def run_benchmark_handler(req: schemas.BenchmarkRunRequest) -> schemas.BenchmarkRunResponse:
    config = BenchmarkConfig.from_dict(req.to_core_dict())
    summary, logs = run_benchmark(config, keep_logs=req.keep_logs)
    files: list[str] = []
    if req.out_dir is not None:
        written = write_results(summary, logs, req.out_dir, record_timings=req.record_timings)
        files = [str(p) for p in written]
    return schemas.BenchmarkRunResponse(
        rows=[
            schemas.SummaryRowModel(
                planner=row.planner,
                protocol=row.protocol,
                means=row.means,
                stds=row.stds,
                replan_time_s=row.replan_time_s,
                episodes=row.episodes,
                invalid=row.invalid,
            )
            for row in summary.rows
        ],
        files=files,
    )


def render_handler(req: schemas.RenderRequest) -> schemas.RenderResponse:
    if (req.grid_csv is None) == (req.values is None):
        raise ConfigurationError("provide exactly one of grid_csv / values")
    if req.grid_csv is not None:
        rows = [
            [float(v) for v in line.split(",")]
            for line in Path(req.grid_csv).read_text().splitlines()
            if line.strip()
        ]
        grid = np.asarray(rows)
    else:
        grid = np.asarray(req.values, dtype=np.float64)
    overlay = None
    if req.overlay_episode_csv is not None:
        overlay = _poses_from_episode_csv(req.overlay_episode_csv)
    path = render_heatmap(grid, req.out_path, overlay=overlay, scale=req.scale)
    return schemas.RenderResponse(
        path=str(path), width=grid.shape[1] * req.scale, height=grid.shape[0] * req.scale
    )


def _poses_from_episode_csv(path: str) -> list[tuple[int, int]]:
    lines = Path(path).read_text().splitlines()
    poses = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) >= 3:
            poses.append((int(parts[1]), int(parts[2])))
    return poses


def export_state_handler(req: schemas.StateExportRequest) -> schemas.StateExportResponse:
    """Run the mission forward ``steps`` actions and dump the planning state."""
    from ..harness import _mission_streams, _planner_setup, _start_pose, build_field
    from ..planners import apply_action, greedy_plan
    from ..unified import Hyperparams

    config = MissionConfig.from_dict(req.config.to_core_dict())
    if req.steps < 0 or req.steps > int(config.budget / ACTION_COST):
        raise ConfigurationError("steps must lie in [0, budget]")
    field_truth = build_field(config)
    spec = config.interest_spec()
    if config.kind is FieldKind.CONTINUOUS:
        from ..belief_maps import MaternKernel

        belief = gp_init(
            config.geometry,
            MaternKernel(config.lengthscale, config.signal_variance),
            config.prior_mean,
            config.noise_variance,
        )
        hp = Hyperparams.for_spec(spec, lengthscale=config.lengthscale)
        confusion = None
    else:
        belief = occ_init(config.geometry, config.num_classes, config.clamp)
        hp = Hyperparams.for_spec(spec)
        confusion = config.confusion_matrix()
    sensor_rng, _ = _mission_streams(config)
    planner_cfg = _planner_setup(config)
    pose = _start_pose(config)
    remaining = float(config.budget)
    model = ContinuousSensorModel(config.noise_std)
    for t in range(1, req.steps + 1):
        if config.kind is FieldKind.CONTINUOUS:
            m = sense_continuous(field_truth, pose, config.fov, model, sensor_rng, step=t)
            belief = gp_fuse(belief, m)
        else:
            m = sense_semantic(field_truth, pose, config.fov, confusion, sensor_rng, step=t)
            belief = occ_fuse(belief, m, confusion)
        state = assemble_state(belief, spec, pose, remaining, hp)
        action = greedy_plan(state, belief, spec, planner_cfg)
        pose = apply_action(config.geometry, pose, action)
        remaining -= ACTION_COST
    state = assemble_state(belief, spec, pose, remaining, hp)
    path = export_state_raster(state, req.out_path)
    return schemas.StateExportResponse(
        path=str(path),
        width=config.geometry.width,
        height=config.geometry.height,
        steps=req.steps,
    )
