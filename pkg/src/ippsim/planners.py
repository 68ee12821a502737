"""Online policy-search planners over the unified planning state.

All planners act on an 8-connected grid with unit-cost moves and score
candidate paths with the interest-weighted uncertainty-reduction reward,
predicting future measurements by the expected-measurement model: Gaussian
maps are fused with their own posterior mean (mean unchanged, variance
shrinks exactly as for a real measurement), occupancy maps with the per-cell
argmax class pushed through the confusion matrix. The interest weights are
frozen from the live belief for the whole lookahead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .belief_maps import (
    GaussianMapBelief,
    MapBelief,
    OccupancyMapBelief,
    bayes_class_update,
    entropy_nats,
)
from .cmaes import CmaEs
from .errors import ConfigurationError, NumericalError
from .grid_world import GridGeometry, InterestSpec
from .reward_metrics import normalized_reduction, reward_from_reduction
from .sensors import ConfusionMatrix, FieldOfView, Pose, fov_cells
from .unified import UnifiedState, interest_grid

ACTION_COST = 1.0


class Action(Enum):
    """Compass moves of one grid cell; enum order is the fixed tie-break order."""

    N = (0, -1)
    NE = (1, -1)
    E = (1, 0)
    SE = (1, 1)
    S = (0, 1)
    SW = (-1, 1)
    W = (-1, 0)
    NW = (-1, -1)

    @property
    def dx(self) -> int:
        return self.value[0]

    @property
    def dy(self) -> int:
        return self.value[1]


COMPASS_ORDER = tuple(Action)


def apply_action(geometry: GridGeometry, pose: Pose, action: Action) -> Pose:
    """Move one cell in the action direction, clamped to the grid."""
    x = min(max(pose.cell_x + action.dx, 0), geometry.width - 1)
    y = min(max(pose.cell_y + action.dy, 0), geometry.height - 1)
    return Pose(x, y)


def feasible_actions(geometry: GridGeometry, pose: Pose) -> list[tuple[Action, Pose]]:
    """Actions that change the pose, deduplicated by their clamped target cell."""
    out: list[tuple[Action, Pose]] = []
    seen: set[tuple[int, int]] = set()
    for action in COMPASS_ORDER:
        nxt = apply_action(geometry, pose, action)
        key = (nxt.cell_x, nxt.cell_y)
        if key == (pose.cell_x, pose.cell_y) or key in seen:
            continue
        seen.add(key)
        out.append((action, nxt))
    return out


@dataclass(frozen=True)
class BudgetState:
    initial: float
    remaining: float

    def __post_init__(self) -> None:
        if not 0 <= self.remaining <= self.initial:
            raise ConfigurationError("remaining budget must lie in [0, initial]")


@dataclass(frozen=True)
class MctsConfig:
    # c_ucb is scaled by the running return range; 0.5 keeps the 8-ary root
    # from over-exploring, which would drop the search below one-step greedy.
    simulations: int = 300
    c_ucb: float = 0.5
    discount: float = 1.0

    def __post_init__(self) -> None:
        if self.simulations < 1:
            raise ConfigurationError("MCTS needs at least 1 simulation")


@dataclass(frozen=True)
class CmaesConfig:
    population: int = 12
    sigma0: float = 0.1
    generations: int = 30

    def __post_init__(self) -> None:
        if self.population < 4:
            raise ConfigurationError("CMA-ES population must be >= 4")


@dataclass(frozen=True)
class PlannerConfig:
    """Shared planner knobs plus the expected-measurement model parameters."""

    horizon: int = 5
    seed: int = 0
    fov: FieldOfView = FieldOfView(1)
    confusion: ConfusionMatrix | None = None
    mcts: MctsConfig = field(default_factory=MctsConfig)
    cmaes: CmaesConfig = field(default_factory=CmaesConfig)
    coverage_step: int | None = None

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


class LookaheadBelief:
    """Cloned belief for simulated updates, with the interest grid frozen.

    Gaussian beliefs are carried in factored form: after fusing cell batches
    J with noise variance r, the posterior covariance is P - W W^T where
    W = P[:, J] L^-T and L is the Cholesky factor of P[J, J] + r I. Extending
    the batch appends block columns to W, so only diagonals are materialized.
    Extensions return new instances; the live belief is never aliased.
    """

    def __init__(
        self,
        belief: MapBelief,
        spec: InterestSpec,
        confusion: ConfusionMatrix | None = None,
    ) -> None:
        self.geometry = belief.geometry
        self.interest = interest_grid(belief, spec)
        if isinstance(belief, GaussianMapBelief):
            self._gaussian = True
            self._P = belief.covariance
            self._mean = belief.mean
            self._noise = belief.noise_variance
            self._measured = np.empty(0, dtype=np.int64)
            self._L = np.empty((0, 0))
            self._W = np.empty((self.geometry.num_cells, 0))
            self.diag = belief.variance()
        else:
            self._gaussian = False
            if confusion is None:
                raise ConfigurationError("occupancy lookahead needs a confusion matrix")
            if confusion.num_classes != belief.K:
                raise ConfigurationError("confusion matrix does not match belief")
            self._confusion = confusion
            self._clamp = belief.clamp
            self.probs = belief.probs.copy()
            self.diag = np.exp(entropy_nats(self.probs))

    @property
    def mean(self) -> np.ndarray:
        """Posterior mean; unchanged by expected-measurement updates."""
        if not self._gaussian:
            raise ConfigurationError("occupancy lookahead has no Gaussian mean")
        return self._mean

    def _shallow_copy(self) -> "LookaheadBelief":
        clone = object.__new__(LookaheadBelief)
        clone.__dict__.update(self.__dict__)
        return clone

    def extend(self, cells: np.ndarray) -> tuple["LookaheadBelief", float]:
        """Fuse an expected measurement of ``cells``; return (belief, reward).

        The reward is the frozen-interest-weighted relative reduction of the
        per-cell reward uncertainty (variance or exponential entropy).
        """
        if self._gaussian:
            return self._extend_gaussian(cells)
        return self._extend_occupancy(cells)

    def _extend_gaussian(self, cells: np.ndarray) -> tuple["LookaheadBelief", float]:
        if cells.size == 1:
            return self._extend_gaussian_point(int(cells[0]))
        P, r = self._P, self._noise
        J, W, L = self._measured, self._W, self._L
        q = cells.size
        cross_prior = P[:, cells]
        C = P[np.ix_(cells, cells)] + r * np.eye(q)
        if J.size:
            B = P[np.ix_(J, cells)]
            M = solve_triangular(L, B, lower=True, check_finite=False)
            C_tilde = C - M.T @ M
            W_new_raw = cross_prior - W @ M
        else:
            M = np.empty((0, q))
            C_tilde = C
            W_new_raw = cross_prior
        try:
            L_q = cholesky(C_tilde, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular innovation matrix in lookahead") from exc
        W_q = solve_triangular(L_q, W_new_raw.T, lower=True, check_finite=False).T
        reduction = np.einsum("ij,ij->i", W_q, W_q)
        new_diag = self.diag - reduction

        clone = self._shallow_copy()
        m = J.size
        L_new = np.zeros((m + q, m + q))
        L_new[:m, :m] = L
        L_new[m:, :m] = M.T
        L_new[m:, m:] = L_q
        clone._L = L_new
        clone._W = np.hstack([W, W_q])
        clone._measured = np.concatenate([J, cells])
        clone.diag = new_diag
        reward = reward_from_reduction(
            normalized_reduction(self.diag, new_diag), self.interest
        )
        return clone, reward

    def _extend_gaussian_point(self, cell: int) -> tuple["LookaheadBelief", float]:
        # Scalar specialization of the block update: point FoVs dominate the
        # planning workload and the batch so far stays tiny (<= horizon).
        P, r = self._P, self._noise
        J, W, L = self._measured, self._W, self._L
        m = J.size
        col = P[:, cell]
        c_tilde = P[cell, cell] + r
        if m:
            b = P[J, cell]
            v = np.empty(m)
            for i in range(m):
                v[i] = (b[i] - L[i, :i] @ v[:i]) / L[i, i]
            c_tilde -= float(v @ v)
            w_raw = col - W @ v
        else:
            v = np.empty(0)
            w_raw = col.astype(np.float64)
        if c_tilde <= 0:
            raise NumericalError("singular innovation matrix in lookahead")
        l_q = np.sqrt(c_tilde)
        w_q = w_raw / l_q
        reduction = w_q * w_q
        new_diag = self.diag - reduction
        ratio = np.divide(
            reduction, self.diag, out=np.zeros_like(reduction), where=self.diag > 0
        )
        reward = float(np.dot(ratio, self.interest))

        clone = self._shallow_copy()
        L_new = np.zeros((m + 1, m + 1))
        L_new[:m, :m] = L
        L_new[m, :m] = v
        L_new[m, m] = l_q
        clone._L = L_new
        W_new = np.empty((w_q.size, m + 1))
        W_new[:, :m] = W
        W_new[:, m] = w_q
        clone._W = W_new
        clone._measured = np.append(J, cell)
        clone.diag = new_diag
        return clone, reward

    def _extend_occupancy(self, cells: np.ndarray) -> tuple["LookaheadBelief", float]:
        probs = self.probs.copy()
        h_before = self.diag[cells]
        for cell in cells:
            observed = int(np.argmax(probs[cell])) + 1
            likelihood = self._confusion.matrix[:, observed - 1]
            probs[cell] = bayes_class_update(probs[cell], likelihood, self._clamp)
        h_after = np.exp(entropy_nats(probs[cells]))
        clone = self._shallow_copy()
        clone.probs = probs
        clone.diag = self.diag.copy()
        clone.diag[cells] = h_after
        reward = reward_from_reduction(
            normalized_reduction(h_before, h_after), self.interest[cells]
        )
        return clone, reward


def simulate_update(
    look: LookaheadBelief, pose: Pose, fov: FieldOfView
) -> LookaheadBelief:
    """Expected-measurement update of the lookahead belief at a pose."""
    updated, _ = look.extend(fov_cells(look.geometry, pose, fov))
    return updated


def _check_budget(state: UnifiedState) -> None:
    if state.remaining_budget < ACTION_COST:
        raise ConfigurationError("remaining budget below the action cost")


def _effective_horizon(config: PlannerConfig, state: UnifiedState) -> int:
    return min(config.horizon, int(state.remaining_budget / ACTION_COST))


def greedy_plan(
    state: UnifiedState,
    belief: MapBelief,
    spec: InterestSpec,
    config: PlannerConfig,
) -> Action:
    """One-step argmax of the expected reward; ties break in compass order."""
    _check_budget(state)
    look = LookaheadBelief(belief, spec, config.confusion)
    best_action = None
    best_reward = -np.inf
    for action, nxt in feasible_actions(belief.geometry, state.pose):
        _, reward = look.extend(fov_cells(belief.geometry, nxt, config.fov))
        if reward > best_reward:
            best_action, best_reward = action, reward
    if best_action is None:
        raise ConfigurationError("no feasible action from the current pose")
    return best_action


def greedy_path(
    belief: MapBelief,
    spec: InterestSpec,
    pose: Pose,
    steps: int,
    config: PlannerConfig,
) -> tuple[list[Action], list[Pose]]:
    """Iterated one-step greedy rollout on the lookahead belief."""
    look = LookaheadBelief(belief, spec, config.confusion)
    actions: list[Action] = []
    poses: list[Pose] = []
    current = pose
    for _ in range(steps):
        best = None
        best_reward = -np.inf
        for action, nxt in feasible_actions(belief.geometry, current):
            cand, reward = look.extend(fov_cells(belief.geometry, nxt, config.fov))
            if reward > best_reward:
                best = (action, nxt, cand)
                best_reward = reward
        if best is None:
            break
        action, current, look = best
        actions.append(action)
        poses.append(current)
    return actions, poses


class _TreeNode:
    __slots__ = (
        "pose",
        "depth",
        "look",
        "prefix_return",
        "candidates",
        "untried",
        "children",
        "visits",
        "value_sum",
    )

    def __init__(
        self,
        pose: Pose,
        depth: int,
        look: LookaheadBelief,
        prefix_return: float,
        cache: "_PoseCache",
    ) -> None:
        self.pose = pose
        self.depth = depth
        self.look = look
        self.prefix_return = prefix_return
        self.candidates = cache.moves(pose)
        self.untried = list(range(len(self.candidates)))
        self.children: list[_TreeNode] = []
        self.visits = 0
        self.value_sum = 0.0


class _PoseCache:
    """Per-decision memo of FoV cells and feasible actions by pose."""

    def __init__(self, geometry: GridGeometry, fov: FieldOfView) -> None:
        self.geometry = geometry
        self.fov = fov
        self._cells: dict[tuple[int, int], np.ndarray] = {}
        self._moves: dict[tuple[int, int], list[tuple[Action, Pose]]] = {}

    def cells(self, pose: Pose) -> np.ndarray:
        key = (pose.cell_x, pose.cell_y)
        if key not in self._cells:
            self._cells[key] = fov_cells(self.geometry, pose, self.fov)
        return self._cells[key]

    def moves(self, pose: Pose) -> list[tuple[Action, Pose]]:
        key = (pose.cell_x, pose.cell_y)
        if key not in self._moves:
            self._moves[key] = feasible_actions(self.geometry, pose)
        return self._moves[key]


def mcts_plan(
    state: UnifiedState,
    belief: MapBelief,
    spec: InterestSpec,
    config: PlannerConfig,
    rng: np.random.Generator | None = None,
) -> Action:
    """UCT search over action sequences up to the budget-clipped horizon.

    Node values are cumulative discounted rewards from the root, leaves are
    evaluated by uniform-random rollouts to the horizon, and the root child
    with the highest visit count is returned. Deterministic given the seed.
    """
    _check_budget(state)
    rng = rng if rng is not None else config.rng()
    geometry = belief.geometry
    horizon = _effective_horizon(config, state)
    gamma = config.mcts.discount
    cache = _PoseCache(geometry, config.fov)
    root_look = LookaheadBelief(belief, spec, config.confusion)
    root = _TreeNode(state.pose, 0, root_look, 0.0, cache)
    return_min, return_max = np.inf, -np.inf

    def expand(node: _TreeNode) -> _TreeNode:
        cand_idx = node.untried.pop(0)
        action, nxt = node.candidates[cand_idx]
        look, reward = node.look.extend(cache.cells(nxt))
        child = _TreeNode(
            nxt,
            node.depth + 1,
            look,
            node.prefix_return + gamma**node.depth * reward,
            cache,
        )
        node.children.append(child)
        return child

    def rollout(node: _TreeNode) -> float:
        total = node.prefix_return
        look = node.look
        pose = node.pose
        for depth in range(node.depth, horizon):
            candidates = cache.moves(pose)
            _, pose = candidates[int(rng.integers(len(candidates)))]
            look, reward = look.extend(cache.cells(pose))
            total += gamma**depth * reward
        return total

    for _ in range(config.mcts.simulations):
        node = root
        path = [root]
        while node.depth < horizon and not node.untried and node.children:
            scale = return_max - return_min
            if scale <= 0:
                scale = 1.0
            log_n = math.log(node.visits)
            node = max(
                node.children,
                key=lambda c: c.value_sum / c.visits
                + config.mcts.c_ucb * scale * math.sqrt(log_n / c.visits),
            )
            path.append(node)
        if node.depth < horizon and node.untried:
            node = expand(node)
            path.append(node)
        total = rollout(node) if node.depth < horizon else node.prefix_return
        return_min = min(return_min, total)
        return_max = max(return_max, total)
        for visited in path:
            visited.visits += 1
            visited.value_sum += total

    best = max(root.children, key=lambda c: c.visits)
    action, _ = root.candidates[root.children.index(best)]
    return action


def cmaes_plan(
    state: UnifiedState,
    belief: MapBelief,
    spec: InterestSpec,
    config: PlannerConfig,
    rng: np.random.Generator | None = None,
) -> Action:
    """Continuous-waypoint path optimization around a greedy initial path.

    A horizon-length sequence of 2-D waypoints in the unit square is
    optimized by CMA-ES; candidate fitness is the cumulative reward of the
    waypoints snapped to their nearest cells. The returned action is the
    feasible grid move best aligned with the first optimized waypoint.
    """
    _check_budget(state)
    rng = rng if rng is not None else config.rng()
    geometry = belief.geometry
    horizon = _effective_horizon(config, state)
    _, init_poses = greedy_path(belief, spec, state.pose, horizon, config)
    if not init_poses:
        raise ConfigurationError("no feasible action from the current pose")
    x0 = np.array([c for p in init_poses for c in _cell_center(geometry, p)])

    base_look = LookaheadBelief(belief, spec, config.confusion)
    cache = _PoseCache(geometry, config.fov)

    def path_fitness(x: np.ndarray) -> float:
        look = base_look
        total = 0.0
        for k in range(horizon):
            pose = _snap_to_cell(geometry, x[2 * k], x[2 * k + 1])
            look, reward = look.extend(cache.cells(pose))
            total += reward
        return -total

    best_x = x0
    if config.cmaes.generations > 0:
        es = CmaEs(x0, config.cmaes.sigma0, rng, popsize=config.cmaes.population)
        for _ in range(config.cmaes.generations):
            xs = es.ask()
            fs = np.array([path_fitness(x) for x in xs])
            es.tell(xs, fs)
        if es.best_f <= path_fitness(x0):
            best_x = es.best_x

    direction = np.array(best_x[:2]) - np.array(_cell_center(geometry, state.pose))
    return _nearest_action(geometry, state.pose, direction)


def _cell_center(geometry: GridGeometry, pose: Pose) -> tuple[float, float]:
    s = geometry.cell_size
    return ((pose.cell_x + 0.5) * s, (pose.cell_y + 0.5) * s)


def _snap_to_cell(geometry: GridGeometry, x: float, y: float) -> Pose:
    s = geometry.cell_size
    cx = min(max(int(round(x / s - 0.5)), 0), geometry.width - 1)
    cy = min(max(int(round(y / s - 0.5)), 0), geometry.height - 1)
    return Pose(cx, cy)


def _nearest_action(geometry: GridGeometry, pose: Pose, direction: np.ndarray) -> Action:
    candidates = feasible_actions(geometry, pose)
    if not candidates:
        raise ConfigurationError("no feasible action from the current pose")
    norm = float(np.linalg.norm(direction))
    if norm < 1e-12:
        return candidates[0][0]
    unit = direction / norm
    best_action = None
    best_cos = -np.inf
    for action, nxt in candidates:
        step = np.array(
            [nxt.cell_x - pose.cell_x, nxt.cell_y - pose.cell_y], dtype=np.float64
        )
        cos = float(np.dot(unit, step / np.linalg.norm(step)))
        if cos > best_cos:
            best_action, best_cos = action, cos
    return best_action


def coverage_plan(
    geometry: GridGeometry, start: Pose, step: int, length: int
) -> list[Action]:
    """Boustrophedon sweep: full rows, vertical shifts of ``step``, bouncing
    at the borders; independent of any belief."""
    if step < 1:
        raise ConfigurationError("coverage step must be >= 1")
    start.validate(geometry)
    x, y = start.cell_x, start.cell_y
    h_dir = Action.E if geometry.width - 1 - x >= x else Action.W
    v_dir = Action.S if geometry.height - 1 - y >= y else Action.N
    actions: list[Action] = []
    while len(actions) < length:
        nx = x + h_dir.dx
        if 0 <= nx < geometry.width:
            actions.append(h_dir)
            x = nx
            continue
        moved = 0
        for _ in range(step):
            ny = y + v_dir.dy
            if not 0 <= ny < geometry.height or len(actions) >= length:
                break
            actions.append(v_dir)
            y = ny
            moved += 1
        if moved == 0 and len(actions) < length:
            v_dir = Action.N if v_dir is Action.S else Action.S
            continue
        h_dir = Action.W if h_dir is Action.E else Action.E
    return actions[:length]
