"""Softmax policies and on-policy gradient estimators.

Policies are immutable: every update returns a new ``Policy``. Gradients are
flat vectors aligned with ``Policy.theta`` and are reduced over trajectories in
a fixed order so that runs are bit-reproducible.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import log_softmax, softmax

from config import ClipConfig
from exceptions import RejectedInput, RunAborted

if TYPE_CHECKING:
    from environments import MOEnvironment

logger = logging.getLogger(__name__)

DEFAULT_ENUMERATION_CAP = 200_000


# --- Policies ---


@dataclass(frozen=True, eq=False)
class Policy:
    """Linear-feature softmax policy; tabular when ``features`` is the identity.

    ``theta`` is the flattened (n_features x n_actions) weight matrix, so the
    logits of state s are ``features[s] @ theta.reshape(F, A)``.
    """

    theta: np.ndarray
    features: np.ndarray
    n_actions: int
    mask: Optional[np.ndarray] = None
    logit_bound: float = 20.0
    kind: str = "linear"

    @classmethod
    def tabular(cls, n_states: int, n_actions: int, theta=None, logit_bound: float = 20.0) -> "Policy":
        features = np.eye(n_states)
        if theta is None:
            theta = np.zeros(n_states * n_actions)
        return cls(
            theta=np.asarray(theta, dtype=float).copy(),
            features=features,
            n_actions=n_actions,
            logit_bound=logit_bound,
            kind="tabular",
        )

    @classmethod
    def linear(cls, features, n_actions: int, theta=None, logit_bound: float = 20.0) -> "Policy":
        features = np.asarray(features, dtype=float)
        if theta is None:
            theta = np.zeros(features.shape[1] * n_actions)
        return cls(
            theta=np.asarray(theta, dtype=float).copy(),
            features=features,
            n_actions=n_actions,
            logit_bound=logit_bound,
        )

    @property
    def n_states(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def dim(self) -> int:
        return self.theta.size

    def with_theta(self, theta: np.ndarray) -> "Policy":
        return replace(self, theta=np.asarray(theta, dtype=float))

    def with_mask(self, feature_ids: Optional[Sequence[int]]) -> "Policy":
        """Restrict influence computations to the parameters of ``feature_ids``."""
        if feature_ids is None:
            return replace(self, mask=None)
        mask = np.zeros((self.n_features, self.n_actions), dtype=bool)
        for f in feature_ids:
            if not 0 <= f < self.n_features:
                raise RejectedInput(f"mask feature {f} outside [0, {self.n_features})")
            mask[f, :] = True
        return replace(self, mask=mask.ravel())

    def logits(self, state: int) -> np.ndarray:
        return self.features[state] @ self.theta.reshape(self.n_features, self.n_actions)

    def action_probs(self, state: int) -> np.ndarray:
        return softmax(self.logits(state))

    def log_prob(self, state: int, action: int) -> float:
        return float(log_softmax(self.logits(state))[action])

    def grad_log_prob(self, state: int, action: int) -> np.ndarray:
        """d log pi(a|s) / d theta = phi(s) ⊗ (e_a − pi(.|s))."""
        coeff = -self.action_probs(state)
        coeff[action] += 1.0
        return np.outer(self.features[state], coeff).ravel()

    def to_json(self, step: int = 0) -> dict:
        return {
            "kind": self.kind,
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "features": None if self.kind == "tabular" else self.features.tolist(),
            "logit_bound": self.logit_bound,
            "theta": self.theta.tolist(),
            "mask": None if self.mask is None else self.mask.tolist(),
            "step": step,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Policy":
        if data["kind"] == "tabular":
            policy = cls.tabular(data["n_states"], data["n_actions"], data["theta"], data["logit_bound"])
        else:
            policy = cls.linear(data["features"], data["n_actions"], data["theta"], data["logit_bound"])
        # checkpoints written before masks were stored have no "mask" key
        mask = data.get("mask")
        return policy if mask is None else replace(policy, mask=np.asarray(mask, dtype=bool))


def save_policy(policy: Policy, path, step: int) -> None:
    with open(path, "w") as f:
        json.dump(policy.to_json(step), f, sort_keys=True)


def load_policy(path) -> Policy:
    with open(path) as f:
        return Policy.from_json(json.load(f))


# --- Trajectories ---


@dataclass(frozen=True)
class Step:
    state: int
    action: int
    reward: Tuple[float, ...]


@dataclass(frozen=True)
class Trajectory:
    steps: Tuple[Step, ...]
    context: int = 0

    def __len__(self) -> int:
        return len(self.steps)

    def reward_matrix(self) -> np.ndarray:
        """L x K matrix of per-step reward vectors."""
        return np.asarray([s.reward for s in self.steps], dtype=float)


@dataclass(frozen=True)
class RolloutGroup:
    context: int
    trajectories: Tuple[Trajectory, ...]
    scalar_rewards: Tuple[float, ...] = field(default_factory=tuple)


def _as_rng(seed: Union[int, Sequence[int], np.random.Generator]) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _draw(probs: np.ndarray, rng: np.random.Generator) -> int:
    idx = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    return min(idx, len(probs) - 1)


def sample_trajectory(
    policy: Policy,
    env: "MOEnvironment",
    seed: Union[int, Sequence[int], np.random.Generator],
    context: Optional[int] = None,
    greedy: bool = False,
) -> Trajectory:
    """Roll out one on-policy episode; fully determined by ``seed``."""
    rng = _as_rng(seed)
    state = env.reset(rng, context)
    start = state
    steps = []
    for _ in range(env.horizon):
        probs = policy.action_probs(state)
        action = int(np.argmax(probs)) if greedy else _draw(probs, rng)
        next_state, reward, done = env.step(state, action, rng)
        steps.append(Step(state=state, action=action, reward=tuple(float(r) for r in reward)))
        state = next_state
        if done:
            break
    return Trajectory(steps=tuple(steps), context=start if context is None else context)


# --- Returns and gradients ---


def returns_per_objective(traj: Trajectory, gamma: float) -> np.ndarray:
    """K x L matrix of G^i_t = sum_l gamma^l r^i_{t+l+1}."""
    if not 0.0 < gamma <= 1.0:
        raise RejectedInput(f"gamma must lie in (0, 1], got {gamma!r}")
    rewards = traj.reward_matrix()
    out = np.zeros_like(rewards)
    running = np.zeros(rewards.shape[1])
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + gamma * running
        out[t] = running
    return out.T


def _scalar_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    out = np.zeros(len(rewards))
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + gamma * running
        out[t] = running
    return out


def score_matrix(policy: Policy, traj: Trajectory) -> np.ndarray:
    """L x D matrix whose rows are grad log pi(a_t|s_t)."""
    return np.stack([policy.grad_log_prob(s.state, s.action) for s in traj.steps])


def _trajectories(group) -> Sequence[Trajectory]:
    if isinstance(group, RolloutGroup):
        return group.trajectories
    trajs = list(group)
    if trajs and isinstance(trajs[0], RolloutGroup):
        return [t for g in trajs for t in g.trajectories]
    return trajs


def reinforce_gradient(policy: Policy, group, w: Sequence[float], gamma: float) -> np.ndarray:
    """Mean over trajectories of sum_t grad log pi(a_t|s_t)·G^w_t.

    Rewards are scalarized with ``w`` before returns are accumulated.
    """
    trajs = _trajectories(group)
    if not trajs:
        raise RejectedInput("rollout group is empty")
    if not 0.0 < gamma <= 1.0:
        raise RejectedInput(f"gamma must lie in (0, 1], got {gamma!r}")
    w = np.asarray(w, dtype=float)
    total = np.zeros(policy.dim)
    for traj in trajs:
        g = _scalar_returns(traj.reward_matrix() @ w, gamma)
        total += g @ score_matrix(policy, traj)
    return total / len(trajs)


def per_objective_gradients(
    policy: Policy, group, gamma: float, mask: Optional[np.ndarray] = None
) -> np.ndarray:
    """K x D matrix: one REINFORCE gradient per objective, same trajectories.

    Coordinates outside ``mask`` (default: the policy's mask) are zeroed.
    """
    trajs = _trajectories(group)
    if not trajs:
        raise RejectedInput("rollout group is empty")
    if mask is None:
        mask = policy.mask
    total = None
    for traj in trajs:
        contrib = returns_per_objective(traj, gamma) @ score_matrix(policy, traj)
        total = contrib if total is None else total + contrib
    grads = total / len(trajs)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (policy.dim,):
            raise RejectedInput(f"mask has length {mask.size}, expected {policy.dim}")
        grads = grads * mask
    return grads


# --- Group baselines ---


def rloo_advantages(scalar_rewards: Sequence[float]) -> np.ndarray:
    """r_i minus the mean of the other G−1 rewards."""
    r = np.asarray(scalar_rewards, dtype=float)
    g = len(r)
    if g < 2:
        raise RejectedInput("leave-one-out baseline needs at least 2 rollouts")
    if np.ptp(r) == 0.0:
        return np.zeros_like(r)
    baseline = (r.sum() - r) / (g - 1)
    return r - baseline


def grpo_advantages(scalar_rewards: Sequence[float]) -> np.ndarray:
    """(r − mean) / population std; a constant group gets zero advantages."""
    r = np.asarray(scalar_rewards, dtype=float)
    if len(r) < 2:
        raise RejectedInput("group normalization needs at least 2 rollouts")
    if np.ptp(r) == 0.0:
        return np.zeros_like(r)
    return (r - r.mean()) / r.std()


def clip_coefficients(ratios: np.ndarray, advantage: float, clip: ClipConfig) -> np.ndarray:
    """Per-step multiplier of grad log pi under the (dual-)clipped surrogate.

    Unclipped, d(ratio·A)/dtheta = ratio·A·grad log pi; a clipped branch is
    constant in theta and contributes nothing.
    """
    ratios = np.asarray(ratios, dtype=float)
    if not clip.enabled:
        return ratios
    coeff = ratios.copy()
    if advantage > 0:
        coeff[ratios > 1.0 + clip.epsilon] = 0.0
    elif advantage < 0:
        coeff[ratios < 1.0 - clip.epsilon] = 0.0
        coeff[ratios > clip.dual_clip_c] = 0.0
    return coeff


def advantage_gradient(
    policy: Policy,
    trajectories: Sequence[Trajectory],
    advantages: Sequence[float],
    clip: ClipConfig,
    behavior: Optional[Policy] = None,
) -> np.ndarray:
    """Gradient of the clipped surrogate mean_j sum_t ratio_{j,t}·A_j.

    With ``behavior`` omitted the data is on-policy, every ratio is 1 and the
    result is the plain advantage-weighted score.
    """
    if len(trajectories) != len(advantages):
        raise RejectedInput("one advantage per trajectory is required")
    if not trajectories:
        raise RejectedInput("rollout group is empty")
    total = np.zeros(policy.dim)
    for traj, adv in zip(trajectories, advantages):
        scores = score_matrix(policy, traj)
        if behavior is None:
            ratios = np.ones(len(traj))
        else:
            ratios = np.exp(
                [policy.log_prob(s.state, s.action) - behavior.log_prob(s.state, s.action) for s in traj.steps]
            )
        total += (clip_coefficients(ratios, adv, clip) * adv) @ scores
    return total / len(trajectories)


def policy_update(
    policy: Policy,
    gradient: np.ndarray,
    lr: float,
    max_grad_norm: Optional[float] = 1.0,
) -> Policy:
    """Gradient ascent step with a global norm cap; theta stays in the logit box."""
    gradient = np.asarray(gradient, dtype=float)
    if gradient.shape != policy.theta.shape:
        raise RejectedInput(f"gradient shape {gradient.shape} != theta shape {policy.theta.shape}")
    if not np.all(np.isfinite(gradient)):
        raise RunAborted(f"non-finite policy gradient (norm={np.linalg.norm(gradient)!r})")
    if lr == 0:
        return policy
    if max_grad_norm is not None:
        norm = float(np.linalg.norm(gradient))
        if norm > max_grad_norm:
            gradient = gradient * (max_grad_norm / norm)
    theta = np.clip(policy.theta + lr * gradient, -policy.logit_bound, policy.logit_bound)
    return policy.with_theta(theta)


def policy_kl(p: Policy, q: Policy, state_weights: Optional[Sequence[float]] = None) -> float:
    """sum_s weight(s)·KL(p(.|s) || q(.|s)), exact for tabular policies."""
    if p.n_states != q.n_states or p.n_actions != q.n_actions:
        raise RejectedInput("policies have different state/action spaces")
    if state_weights is None:
        state_weights = np.full(p.n_states, 1.0 / p.n_states)
    state_weights = np.asarray(state_weights, dtype=float)
    total = 0.0
    for s in range(p.n_states):
        if state_weights[s] == 0.0:
            continue
        log_p = log_softmax(p.logits(s))
        log_q = log_softmax(q.logits(s))
        total += state_weights[s] * float(np.sum(np.exp(log_p) * (log_p - log_q)))
    return max(total, 0.0)


# --- Exact enumeration ---


def enumerate_trajectories(
    policy: Policy, env: "MOEnvironment", cap: int = DEFAULT_ENUMERATION_CAP
) -> Iterator[Tuple[float, Trajectory]]:
    """Every trajectory up to the horizon with its probability under ``policy``.

    Rewards are the expected reward vectors of each transition, which leaves
    expected returns and their gradients unchanged.
    """
    count = 0
    stack: List[Tuple[float, int, Tuple[Step, ...], int]] = [
        (p0, s0, (), s0) for p0, s0 in reversed(env.initial_distribution())
    ]
    while stack:
        prob, state, steps, start = stack.pop()
        probs = policy.action_probs(state)
        branches = []
        for action in range(env.n_actions):
            for p_next, next_state, reward, done in env.transitions(state, action):
                p = prob * probs[action] * p_next
                step = Step(state=state, action=action, reward=tuple(float(r) for r in reward))
                path = steps + (step,)
                if done or len(path) >= env.horizon:
                    count += 1
                    if count > cap:
                        raise RejectedInput(f"trajectory enumeration exceeds the cap of {cap}")
                    branches.append(("leaf", p, path, start, None))
                else:
                    branches.append(("node", p, path, start, next_state))
        for kind, p, path, s0, nxt in branches:
            if kind == "leaf":
                yield p, Trajectory(steps=path, context=s0)
        for kind, p, path, s0, nxt in reversed(branches):
            if kind == "node":
                stack.append((p, nxt, path, s0))
        if len(stack) > cap:
            raise RejectedInput(f"trajectory enumeration exceeds the cap of {cap}")


def exact_gradient_oracle(
    policy: Policy, env: "MOEnvironment", w: Sequence[float], gamma: float, cap: int = DEFAULT_ENUMERATION_CAP
) -> np.ndarray:
    """Expectation of the REINFORCE estimator, by enumerating all trajectories.

    With gamma = 1 this is exactly grad J for J = E[sum_t w·r_t].
    """
    w = np.asarray(w, dtype=float)
    total = np.zeros(policy.dim)
    for prob, traj in enumerate_trajectories(policy, env, cap):
        if prob == 0.0:
            continue
        g = _scalar_returns(traj.reward_matrix() @ w, gamma)
        total += prob * (g @ score_matrix(policy, traj))
    return total


def exact_objective(
    policy: Policy, env: "MOEnvironment", w: Sequence[float], gamma: float, cap: int = DEFAULT_ENUMERATION_CAP
) -> float:
    """J = E[G^w_0] by enumeration."""
    w = np.asarray(w, dtype=float)
    value = 0.0
    for prob, traj in enumerate_trajectories(policy, env, cap):
        g = _scalar_returns(traj.reward_matrix() @ w, gamma)
        value += prob * g[0]
    return float(value)


def expected_returns(
    policy: Policy, env: "MOEnvironment", gamma: float = 1.0, cap: int = DEFAULT_ENUMERATION_CAP
) -> np.ndarray:
    """Per-objective expected return vector by enumeration."""
    value = np.zeros(env.n_objectives)
    for prob, traj in enumerate_trajectories(policy, env, cap):
        value += prob * returns_per_objective(traj, gamma)[:, 0]
    return value


def max_score_norm(policy: Policy, states: Sequence[int]) -> float:
    """Largest ||grad log pi(a|s)|| over the given states and all actions."""
    best = 0.0
    for s in states:
        for a in range(policy.n_actions):
            best = max(best, float(np.linalg.norm(policy.grad_log_prob(s, a))))
    return best
