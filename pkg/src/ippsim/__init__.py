"""Deterministic terrain-monitoring simulator, adaptive planners, and benchmarks."""

__version__ = "0.1.0"

from .belief_maps import (
    GaussianMapBelief,
    MaternKernel,
    OccupancyMapBelief,
    UncertaintyUse,
    cell_uncertainty,
    gp_fuse,
    gp_init,
    kernel_eval,
    occ_fuse,
    occ_init,
)
from .errors import ConfigurationError, IngestionError, IppError, MetricError, NumericalError
from .grid_world import (
    ContinuousInterest,
    DiscreteInterest,
    FieldKind,
    GridGeometry,
    TerrainField,
    generate_continuous_field,
    generate_discrete_field,
    interest_mask,
    load_raster,
)
from .harness import (
    BenchmarkConfig,
    EpisodeLog,
    MissionConfig,
    run_benchmark,
    run_mission,
    write_results,
)
from .planners import (
    Action,
    BudgetState,
    CmaesConfig,
    LookaheadBelief,
    MctsConfig,
    PlannerConfig,
    cmaes_plan,
    coverage_plan,
    greedy_plan,
    mcts_plan,
    simulate_update,
)
from .render import render_heatmap
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
    Measurement,
    Pose,
    sense_continuous,
    sense_semantic,
)
from .unified import (
    Hyperparams,
    UnifiedState,
    assemble_state,
    export_state_raster,
    interest_probability,
    load_state_raster,
)
