"""Pydantic request/response models for the planning service.

These mirror the JSON config schema consumed by the core harness; the
service layer validates shape here and hands plain dicts to the core, which
enforces the semantic invariants.
"""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class GridModel(BaseModel):
    width: int = 25
    height: int = 25


class MctsModel(BaseModel):
    simulations: int = 300
    c_ucb: float = 1.0
    discount: float = 1.0


class CmaesModel(BaseModel):
    population: int = 12
    sigma0: float = 0.1
    generations: int = 30


class PlannerConfigModel(BaseModel):
    horizon: int = 5
    seed: int = 0
    fov: Optional[int] = None
    mcts: MctsModel = Field(default_factory=MctsModel)
    cmaes: CmaesModel = Field(default_factory=CmaesModel)
    coverage_step: Optional[int] = None

    def to_core_dict(self) -> dict[str, Any]:
        d = self.model_dump()
        if d["fov"] is None:
            d.pop("fov")
        return d


class MissionConfigModel(BaseModel):
    kind: str = "continuous"
    geometry: GridModel = Field(default_factory=GridModel)
    seed: int = 0
    budget: float = 100.0
    planner: str = "greedy"
    correlation_length: float = 0.35
    raster_path: Optional[str] = None
    f_th: float = 0.4
    interesting_classes: list[int] = [1]
    lengthscale: float = 0.35
    signal_variance: float = 1.0
    prior_mean: float = 0.5
    noise_variance: float = 0.01
    noise_std: float = 0.1
    num_classes: int = 3
    confusion_diagonal: float = 0.8
    confusion: Optional[list[list[float]]] = None
    clamp: list[float] = [0.01, 0.99]
    half_extent: Optional[int] = None
    start: Optional[list[int]] = None
    planner_config: Optional[PlannerConfigModel] = None

    def to_core_dict(self) -> dict[str, Any]:
        d = self.model_dump()
        if self.planner_config is not None:
            d["planner_config"] = self.planner_config.to_core_dict()
        return d


class MissionRunRequest(BaseModel):
    config: MissionConfigModel = Field(default_factory=MissionConfigModel)
    out_dir: Optional[str] = None
    record_timings: bool = False


class StepModel(BaseModel):
    step: int
    pose: list[int]
    action: str
    consumed_budget: float
    reward: float
    normalized_uncertainty: float


class MissionRunResponse(BaseModel):
    valid: bool
    num_actions: int
    metrics: dict[str, float]
    mean_replan_seconds: float
    steps: list[StepModel]
    files: list[str] = []


class BenchmarkRunRequest(BaseModel):
    kind: str = "continuous"
    protocol: str = "static"
    missions: int = 10
    seeds: list[int] = [0, 1, 2]
    planners: list[str] = ["greedy", "mcts", "cmaes", "coverage"]
    master_seed: int = 0
    geometry: GridModel = Field(default_factory=GridModel)
    budget: float = 100.0
    num_classes: int = 3
    planner_config: Optional[PlannerConfigModel] = None
    mission_overrides: dict[str, Any] = {}
    record_timings: bool = False
    parallel: int = 1
    out_dir: Optional[str] = None
    keep_logs: bool = True

    def to_core_dict(self) -> dict[str, Any]:
        d = self.model_dump(exclude={"out_dir", "keep_logs"})
        d["geometry"] = {"width": self.geometry.width, "height": self.geometry.height}
        if self.planner_config is not None:
            d["planner_config"] = self.planner_config.to_core_dict()
        return d


class SummaryRowModel(BaseModel):
    planner: str
    protocol: str
    means: dict[str, float]
    stds: dict[str, float]
    replan_time_s: float
    episodes: int
    invalid: int


class BenchmarkRunResponse(BaseModel):
    rows: list[SummaryRowModel]
    files: list[str] = []


class RenderRequest(BaseModel):
    grid_csv: Optional[str] = None
    values: Optional[list[list[float]]] = None
    out_path: str
    scale: int = 1
    overlay_episode_csv: Optional[str] = None


class RenderResponse(BaseModel):
    path: str
    width: int
    height: int


class StateExportRequest(BaseModel):
    config: MissionConfigModel = Field(default_factory=MissionConfigModel)
    steps: int = 0
    out_path: str


class StateExportResponse(BaseModel):
    path: str
    width: int
    height: int
    steps: int


class HealthResponse(BaseModel):
    status: str
    version: str
