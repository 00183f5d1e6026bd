"""Small multi-objective environments with enumerable true Pareto fronts.

Every environment emits bounded training rewards in [0, r_max] and separately
reports episode metrics (the objective vector used for evaluation and the
Pareto buffer). Metrics that are "smaller is better" in raw form are negated
here, once, and flagged in ``objectives``.
"""

import itertools
import logging
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import BanditConfig, DeepSeaTreasureConfig, ReasoningConfig
from exceptions import RejectedInput
from pareto_core import ObjectiveVector, as_objective, pareto_filter
from rl_core import Policy, Trajectory, sample_trajectory

logger = logging.getLogger(__name__)

DEFAULT_FRONT_CAP = 100_000
REFERENCE_MARGIN = 1e-6

Transition = Tuple[float, int, np.ndarray, bool]


@dataclass(frozen=True)
class ObjectiveSpec:
    name: str
    negated: bool = False
    scale: float = 1.0

    def raw(self, value: float) -> float:
        """Undo the orientation: the metric as it would be reported."""
        return (-value if self.negated else value) * self.scale


# --- 1. Interface ---
class MOEnvironment(ABC):
    n_states: int
    n_actions: int
    horizon: int
    objectives: Tuple[ObjectiveSpec, ...]
    r_max: float = 1.0
    n_contexts: int = 1
    configured_reference: Optional[ObjectiveVector] = None

    @property
    def n_objectives(self) -> int:
        return len(self.objectives)

    @abstractmethod
    def reset(self, rng: np.random.Generator, context: Optional[int] = None) -> int: ...

    @abstractmethod
    def step(self, state: int, action: int, rng: np.random.Generator) -> Tuple[int, np.ndarray, bool]: ...

    @abstractmethod
    def initial_distribution(self) -> List[Tuple[float, int]]: ...

    @abstractmethod
    def transitions(self, state: int, action: int) -> List[Transition]:
        """All (probability, next state, expected reward, done) outcomes."""

    @abstractmethod
    def episode_metrics(self, traj: Trajectory) -> np.ndarray: ...

    @abstractmethod
    def achievable_outcomes(self, cap: int = DEFAULT_FRONT_CAP) -> List[ObjectiveVector]:
        """Metric vectors of every deterministic policy (or a superset of its front)."""

    @abstractmethod
    def metric_lower_bound(self) -> np.ndarray: ...

    def reference_point(self) -> ObjectiveVector:
        if self.configured_reference is not None:
            return self.configured_reference
        return as_objective(self.metric_lower_bound() - REFERENCE_MARGIN)

    def policy_features(self) -> np.ndarray:
        return np.eye(self.n_states)

    def make_policy(self, logit_bound: float = 20.0) -> Policy:
        features = self.policy_features()
        if features.shape[0] == features.shape[1] and np.array_equal(features, np.eye(self.n_states)):
            return Policy.tabular(self.n_states, self.n_actions, logit_bound=logit_bound)
        return Policy.linear(features, self.n_actions, logit_bound=logit_bound)

    def update_statistics(self, trajectories: Sequence[Trajectory]) -> None:
        """Hook for per-run reward statistics; called once per training step."""

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "objectives": [o.name for o in self.objectives],
            "negated": [o.negated for o in self.objectives],
            "reference": list(self.reference_point()),
        }


def _reference_from(cfg_reference: Optional[Sequence[float]], k: int) -> Optional[ObjectiveVector]:
    if cfg_reference is None:
        return None
    ref = as_objective(cfg_reference)
    if len(ref) != k:
        raise RejectedInput(f"reference has {len(ref)} components, environment has {k} objectives")
    return ref


# --- 2. Deep sea treasure ---
UP, RIGHT, DOWN, LEFT = range(4)
_MOVES = {UP: (-1, 0), RIGHT: (0, 1), DOWN: (1, 0), LEFT: (0, -1)}


class DeepSeaTreasure(MOEnvironment):
    """Submarine gridworld: treasure value against time to reach it.

    Column ``c`` holds its treasure at row ``depths[c]`` with rock beneath.
    States encode (elapsed steps, cell) so the time reward can be paid at
    termination; the default policy features only see the cell.

    Training rewards are treasure/max_value and time_scale·(H − elapsed)/H,
    both paid on reaching a treasure. Episode metrics do not depend on
    ``time_scale``.
    """

    kind = "deep_sea_treasure"

    def __init__(
        self,
        depths: Sequence[int],
        treasures: Sequence[float],
        horizon: int,
        reference=None,
        time_scale: float = 1.0,
    ):
        if not depths or len(depths) != len(treasures):
            raise RejectedInput("depths and treasures must be non-empty and of equal length")
        if any(d < 1 for d in depths) or any(b < a for a, b in zip(depths, depths[1:])):
            raise RejectedInput(f"depths must be >= 1 and non-decreasing: {list(depths)}")
        if any(t <= 0 for t in treasures) or any(b <= a for a, b in zip(treasures, treasures[1:])):
            raise RejectedInput(f"treasures must be positive and increasing: {list(treasures)}")
        if horizon < 1:
            raise RejectedInput("horizon must be >= 1")
        if not 0 < time_scale <= 1:
            raise RejectedInput(f"time_scale must be in (0, 1], got {time_scale}")
        self.depths = tuple(int(d) for d in depths)
        self.treasures = tuple(float(t) for t in treasures)
        self.horizon = int(horizon)
        self.time_scale = float(time_scale)
        self.n_rows = max(self.depths) + 1
        self.n_cols = len(self.depths)
        self.n_cells = self.n_rows * self.n_cols
        self.n_states = self.n_cells * self.horizon
        self.n_actions = 4
        self.max_value = max(self.treasures)
        self.objectives = (ObjectiveSpec("treasure"), ObjectiveSpec("steps", negated=True))
        self.configured_reference = _reference_from(reference, 2)

    def _cell(self, row: int, col: int) -> int:
        return row * self.n_cols + col

    def _coords(self, cell: int) -> Tuple[int, int]:
        return divmod(cell, self.n_cols)

    def encode(self, t: int, cell: int) -> int:
        return t * self.n_cells + cell

    def decode(self, state: int) -> Tuple[int, int]:
        return divmod(state, self.n_cells)

    def is_rock(self, row: int, col: int) -> bool:
        return row > self.depths[col]

    def is_treasure(self, row: int, col: int) -> bool:
        return row == self.depths[col]

    def move(self, cell: int, action: int) -> int:
        row, col = self._coords(cell)
        dr, dc = _MOVES[action]
        r, c = row + dr, col + dc
        if not (0 <= r < self.n_rows and 0 <= c < self.n_cols) or self.is_rock(r, c):
            return cell
        return self._cell(r, c)

    def _outcome(self, state: int, action: int) -> Tuple[int, np.ndarray, bool]:
        t, cell = self.decode(state)
        nxt = self.move(cell, action)
        elapsed = t + 1
        row, col = self._coords(nxt)
        reward = np.zeros(2)
        done = False
        if self.is_treasure(row, col):
            reward[0] = self.treasures[col] / self.max_value
            reward[1] = self.time_scale * (self.horizon - elapsed) / self.horizon
            done = True
        elif elapsed >= self.horizon:
            done = True
        return self.encode(min(elapsed, self.horizon - 1), nxt), reward, done

    def reset(self, rng, context=None) -> int:
        return self.encode(0, self._cell(0, 0))

    def step(self, state, action, rng):
        return self._outcome(state, action)

    def initial_distribution(self):
        return [(1.0, self.encode(0, self._cell(0, 0)))]

    def transitions(self, state, action):
        nxt, reward, done = self._outcome(state, action)
        return [(1.0, nxt, reward, done)]

    def policy_features(self) -> np.ndarray:
        cells = np.arange(self.n_states) % self.n_cells
        return np.eye(self.n_cells)[cells]

    def episode_metrics(self, traj: Trajectory) -> np.ndarray:
        value = sum(s.reward[0] for s in traj.steps) * self.max_value
        return np.array([value, -float(len(traj))])

    def shortest_paths(self) -> List[int]:
        """BFS distance from the start to each treasure."""
        start = self._cell(0, 0)
        dist = {start: 0}
        queue = deque([start])
        while queue:
            cell = queue.popleft()
            row, col = self._coords(cell)
            if self.is_treasure(row, col) and cell != start:
                continue
            for action in _MOVES:
                nxt = self.move(cell, action)
                if nxt not in dist:
                    dist[nxt] = dist[cell] + 1
                    queue.append(nxt)
        return [dist.get(self._cell(d, c), -1) for c, d in enumerate(self.depths)]

    def achievable_outcomes(self, cap=DEFAULT_FRONT_CAP):
        outcomes = [as_objective((0.0, -float(self.horizon)))]
        for col, d in enumerate(self.shortest_paths()):
            if 0 < d <= self.horizon:
                outcomes.append(as_objective((self.treasures[col], -float(d))))
        return outcomes

    def metric_lower_bound(self):
        return np.array([0.0, -float(self.horizon)])

    def greedy_nearest_policy(self) -> Policy:
        """Deterministic policy that dives straight to the first treasure."""
        policy = self.make_policy()
        theta = np.zeros((self.n_cells, self.n_actions))
        theta[:, DOWN] = policy.logit_bound
        return policy.with_theta(theta.ravel())


# --- 3. Synthetic reasoning task ---
class SyntheticReasoning(MOEnvironment):
    """One-step task: pick a solution template for a problem context.

    Rewards are (accuracy, conciseness, clarity), each 0/1: exact-match
    correctness for the context, length below the running average of previous
    rollouts, and presence of explicit step markers. Metrics report
    correctness, negated length (scaled by the longest template) and clarity.
    """

    kind = "synthetic_reasoning"

    def __init__(
        self,
        template_correct: Sequence[str],
        template_lengths: Sequence[int],
        template_steps: Sequence[int],
        initial_average: Optional[float] = None,
        reference=None,
    ):
        if not template_correct:
            raise RejectedInput("template table is empty")
        if len(template_lengths) != len(template_correct) or len(template_steps) != len(template_correct):
            raise RejectedInput("template columns differ in length")
        self.correct = np.array([[int(ch) for ch in row] for row in template_correct], dtype=float)
        self.lengths = np.asarray(template_lengths, dtype=float)
        self.has_steps = np.asarray(template_steps, dtype=float)
        if np.any(self.lengths <= 0):
            raise RejectedInput("template lengths must be positive")
        self.n_actions = len(template_correct)
        self.n_contexts = self.correct.shape[1]
        self.n_states = self.n_contexts
        self.horizon = 1
        self.length_scale = float(self.lengths.max())
        self.initial_average = float(initial_average) if initial_average is not None else float(self.lengths.mean())
        self._length_sum = 0.0
        self._length_count = 0
        self.objectives = (
            ObjectiveSpec("accuracy"),
            ObjectiveSpec("length", negated=True, scale=self.length_scale),
            ObjectiveSpec("clarity"),
        )
        self.configured_reference = _reference_from(reference, 3)

    @property
    def running_average(self) -> float:
        if self._length_count == 0:
            return self.initial_average
        return self._length_sum / self._length_count

    def _reward(self, context: int, action: int) -> np.ndarray:
        return np.array(
            [
                self.correct[action, context],
                1.0 if self.lengths[action] < self.running_average else 0.0,
                self.has_steps[action],
            ]
        )

    def reset(self, rng, context=None) -> int:
        if context is None:
            return int(rng.integers(self.n_contexts))
        if not 0 <= context < self.n_contexts:
            raise RejectedInput(f"context {context} outside [0, {self.n_contexts})")
        return int(context)

    def step(self, state, action, rng):
        return state, self._reward(state, action), True

    def initial_distribution(self):
        return [(1.0 / self.n_contexts, c) for c in range(self.n_contexts)]

    def transitions(self, state, action):
        return [(1.0, state, self._reward(state, action), True)]

    def template_metrics(self, context: int, action: int) -> np.ndarray:
        return np.array(
            [
                self.correct[action, context],
                -self.lengths[action] / self.length_scale,
                self.has_steps[action],
            ]
        )

    def episode_metrics(self, traj: Trajectory) -> np.ndarray:
        step = traj.steps[0]
        return self.template_metrics(step.state, step.action)

    def raw_length(self, traj: Trajectory) -> float:
        return float(self.lengths[traj.steps[0].action])

    def update_statistics(self, trajectories):
        for traj in trajectories:
            self._length_sum += self.raw_length(traj)
            self._length_count += 1

    def achievable_outcomes(self, cap=DEFAULT_FRONT_CAP):
        total = self.n_actions ** self.n_contexts
        if total > cap:
            raise RejectedInput(f"{total} deterministic policies exceed the enumeration cap of {cap}")
        per_context = [[self.template_metrics(c, a) for a in range(self.n_actions)] for c in range(self.n_contexts)]
        outcomes = []
        for assignment in itertools.product(range(self.n_actions), repeat=self.n_contexts):
            mean = np.mean([per_context[c][a] for c, a in enumerate(assignment)], axis=0)
            outcomes.append(as_objective(mean))
        return outcomes

    def metric_lower_bound(self):
        return np.array([0.0, -1.0, 0.0])


# --- 4. Bandit ---
class MOBandit(MOEnvironment):
    kind = "mo_bandit"

    def __init__(self, arms: Sequence[Sequence[float]], bernoulli: bool = False, reference=None):
        if not arms:
            raise RejectedInput("arm table is empty")
        try:
            table = np.asarray(arms, dtype=float)
        except ValueError as exc:
            raise RejectedInput(f"malformed arm table: {exc}") from exc
        if table.ndim != 2 or table.shape[1] < 1:
            raise RejectedInput("every arm needs a reward vector of the same length")
        if np.any(table < 0) or not np.all(np.isfinite(table)):
            raise RejectedInput("arm rewards must be finite and non-negative")
        if bernoulli and np.any(table > 1):
            raise RejectedInput("Bernoulli arm parameters must lie in [0, 1]")
        self.arms = table
        self.bernoulli = bernoulli
        self.n_states = 1
        self.n_actions = len(table)
        self.horizon = 1
        self.r_max = 1.0 if bernoulli else max(1.0, float(table.max()))
        self.objectives = tuple(ObjectiveSpec(f"r{i}") for i in range(table.shape[1]))
        self.configured_reference = _reference_from(reference, table.shape[1])

    def reset(self, rng, context=None) -> int:
        return 0

    def step(self, state, action, rng):
        if self.bernoulli:
            reward = (rng.random(self.arms.shape[1]) < self.arms[action]).astype(float)
        else:
            reward = self.arms[action].copy()
        return 0, reward, True

    def initial_distribution(self):
        return [(1.0, 0)]

    def transitions(self, state, action):
        return [(1.0, 0, self.arms[action].copy(), True)]

    def episode_metrics(self, traj):
        return traj.reward_matrix().sum(axis=0)

    def achievable_outcomes(self, cap=DEFAULT_FRONT_CAP):
        if self.n_actions > cap:
            raise RejectedInput(f"{self.n_actions} arms exceed the enumeration cap of {cap}")
        return [as_objective(a) for a in self.arms]

    def metric_lower_bound(self):
        if self.bernoulli:
            return np.zeros(self.arms.shape[1])
        return self.arms.min(axis=0)


# --- 5. Factories ---
def deep_sea_treasure(cfg: DeepSeaTreasureConfig) -> DeepSeaTreasure:
    return DeepSeaTreasure(cfg.depths, cfg.treasures, cfg.horizon, cfg.reference, cfg.time_scale)


def synthetic_reasoning_env(cfg: ReasoningConfig) -> SyntheticReasoning:
    return SyntheticReasoning(
        cfg.template_correct, cfg.template_lengths, cfg.template_steps, cfg.initial_average, cfg.reference
    )


def mo_bandit(cfg: BanditConfig) -> MOBandit:
    return MOBandit(cfg.arms, cfg.bernoulli, cfg.reference)


_FACTORIES = {
    "deep_sea_treasure": deep_sea_treasure,
    "synthetic_reasoning": synthetic_reasoning_env,
    "mo_bandit": mo_bandit,
}


def make_environment(cfg) -> MOEnvironment:
    """Fresh, independent environment for one run."""
    return _FACTORIES[cfg.kind](cfg)


def true_pareto_front(env: MOEnvironment, cap: int = DEFAULT_FRONT_CAP):
    return pareto_filter(env.achievable_outcomes(cap))


# --- 6. Evaluation ---
@dataclass(frozen=True)
class EvaluationSet:
    env: MOEnvironment
    episodes: Tuple[Tuple[int, int], ...]
    greedy: bool = False

    def __len__(self) -> int:
        return len(self.episodes)


def make_evaluation_set(env: MOEnvironment, n_episodes: int, seed: int, greedy: bool = False) -> EvaluationSet:
    """Fixed (sampling seed, context) pairs; contexts cycle through the env's."""
    episodes = tuple((seed * 1_000_003 + i, i % env.n_contexts) for i in range(n_episodes))
    return EvaluationSet(env=env, episodes=episodes, greedy=greedy)


def evaluate(policy: Policy, eval_set: EvaluationSet) -> ObjectiveVector:
    if len(eval_set) == 0:
        raise RejectedInput("evaluation set is empty")
    env = eval_set.env
    total = np.zeros(env.n_objectives)
    for seed, context in eval_set.episodes:
        traj = sample_trajectory(policy, env, seed, context=context, greedy=eval_set.greedy)
        total += env.episode_metrics(traj)
    return as_objective(total / len(eval_set))
