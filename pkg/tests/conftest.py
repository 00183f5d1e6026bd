import numpy as np
import pytest

from config import BanditConfig, DeepSeaTreasureConfig, ReasoningConfig, TrainerConfig
from environments import MOEnvironment, ObjectiveSpec, deep_sea_treasure, mo_bandit, synthetic_reasoning_env


class TwoStateChain(MOEnvironment):
    """Two decision states, one stochastic branch; small enough to enumerate."""

    kind = "two_state_chain"

    def __init__(self):
        self.n_states = 2
        self.n_actions = 2
        self.horizon = 2
        self.objectives = (ObjectiveSpec("a"), ObjectiveSpec("b"))
        self.configured_reference = None

    def transitions(self, state, action):
        if state == 0 and action == 0:
            return [(1.0, 1, np.array([1.0, 0.0]), False)]
        if state == 0:
            return [(0.5, 1, np.array([0.0, 1.0]), False), (0.5, 1, np.array([0.0, 0.0]), True)]
        if action == 0:
            return [(1.0, 1, np.array([0.5, 0.0]), True)]
        return [(1.0, 1, np.array([0.0, 0.5]), True)]

    def reset(self, rng, context=None):
        return 0

    def step(self, state, action, rng):
        outcomes = self.transitions(state, action)
        u = rng.random()
        acc = 0.0
        for p, nxt, reward, done in outcomes:
            acc += p
            if u < acc:
                return nxt, reward, done
        _, nxt, reward, done = outcomes[-1]
        return nxt, reward, done

    def initial_distribution(self):
        return [(1.0, 0)]

    def episode_metrics(self, traj):
        return traj.reward_matrix().sum(axis=0)

    def achievable_outcomes(self, cap=100_000):
        return []

    def metric_lower_bound(self):
        return np.zeros(2)


@pytest.fixture
def chain():
    return TwoStateChain()


@pytest.fixture
def bandit():
    return mo_bandit(BanditConfig(kind="mo_bandit", arms=[[1.0, 0.0], [0.0, 1.0], [0.2, 0.2]]))


@pytest.fixture
def two_arm_bandit():
    return mo_bandit(BanditConfig(kind="mo_bandit", arms=[[1.0, 0.0], [0.0, 1.0]]))


@pytest.fixture
def dst():
    return deep_sea_treasure(DeepSeaTreasureConfig(kind="deep_sea_treasure"))


@pytest.fixture
def reasoning():
    return synthetic_reasoning_env(ReasoningConfig(kind="synthetic_reasoning"))


@pytest.fixture
def fast_trainer():
    """Small REINFORCE configuration; tests override what they need."""

    def _make(**overrides):
        values = dict(
            algorithm="REINFORCE",
            weighting="fixed",
            w0=[0.5, 0.5],
            batch_size=4,
            rollout_size=2,
            max_steps=6,
            eval_episodes=8,
            policy_lr=0.5,
            seed=3,
        )
        values.update(overrides)
        return TrainerConfig(**values)

    return _make
