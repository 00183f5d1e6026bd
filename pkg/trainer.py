"""Training loops: fixed weights, hypervolume-guided meta-reward and
gradient-influence weighting, plus run records and their persistence.
"""

import json
import logging
import platform
import sys
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import TrainerConfig
from environments import MOEnvironment, ObjectiveSpec, evaluate, make_evaluation_set
from exceptions import RejectedInput, RunAborted
from pareto_core import ObjectiveVector, ParetoBuffer, buffer_insert
from rl_core import (
    Policy,
    RolloutGroup,
    advantage_gradient,
    grpo_advantages,
    per_objective_gradients,
    policy_update,
    reinforce_gradient,
    returns_per_objective,
    rloo_advantages,
    sample_trajectory,
    save_policy,
)
from weighting import (
    ScheduleState,
    as_weights,
    influence,
    meta_reward,
    schedule_rate,
    uniform_weights,
    update_weights,
)

logger = logging.getLogger(__name__)

TINY_WEIGHT = 1e-6


# --- 1. Records ---
@dataclass(frozen=True)
class StepEntry:
    step: int
    weights: Tuple[float, ...]
    validation: Optional[ObjectiveVector] = None
    delta_hv: Optional[float] = None
    accepted: bool = False
    r_pareto: Optional[float] = None
    influence: Optional[Tuple[float, ...]] = None
    tau: Optional[float] = None
    grad_norm_max: Optional[float] = None
    train_reward_mean: Optional[float] = None
    checkpoint: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "weights": list(self.weights),
            "validation": None if self.validation is None else list(self.validation),
            "delta_hv": self.delta_hv,
            "accepted": self.accepted,
            "r_pareto": self.r_pareto,
            "influence": None if self.influence is None else list(self.influence),
            "tau": self.tau,
            "grad_norm_max": self.grad_norm_max,
            "train_reward_mean": self.train_reward_mean,
            "checkpoint": self.checkpoint,
        }

    @classmethod
    def from_json(cls, data: dict) -> "StepEntry":
        def _tuple(v):
            return None if v is None else tuple(float(x) for x in v)

        return cls(
            step=int(data["step"]),
            weights=_tuple(data["weights"]),
            validation=_tuple(data.get("validation")),
            delta_hv=data.get("delta_hv"),
            accepted=bool(data.get("accepted", False)),
            r_pareto=data.get("r_pareto"),
            influence=_tuple(data.get("influence")),
            tau=data.get("tau"),
            grad_norm_max=data.get("grad_norm_max"),
            train_reward_mean=data.get("train_reward_mean"),
            checkpoint=data.get("checkpoint"),
        )


@dataclass
class RunRecord:
    """Append-only trace of one run; ``buffer`` is the live Pareto archive."""

    arm: str
    seed: int
    weighting: str
    objectives: Tuple[ObjectiveSpec, ...]
    buffer: ParetoBuffer
    initial_weights: Tuple[float, ...]
    entries: List[StepEntry] = field(default_factory=list)
    checkpoints: Dict[int, Policy] = field(default_factory=dict)
    config: Optional[dict] = None
    environment: Optional[dict] = None
    status: str = "running"

    def append(self, entry: StepEntry) -> None:
        if self.entries and entry.step <= self.entries[-1].step:
            raise RejectedInput(f"step {entry.step} does not follow step {self.entries[-1].step}")
        self.entries.append(entry)

    @property
    def final_weights(self) -> Tuple[float, ...]:
        return self.entries[-1].weights if self.entries else self.initial_weights

    def weight_trace(self) -> Tuple[List[float], List[Tuple[float, ...]]]:
        return weight_trace(self.entries)


def weight_trace(entries: Sequence[StepEntry]) -> Tuple[List[float], List[Tuple[float, ...]]]:
    """(tau, influence) pairs of every weight update, in order."""
    taus, infls = [], []
    for e in entries:
        if e.tau is not None and e.influence is not None:
            taus.append(e.tau)
            infls.append(e.influence)
    return taus, infls


def steps_to_front(record) -> float:
    """Mean step at which the points of the final front were accepted."""
    buffer = record.buffer if hasattr(record, "buffer") else record
    steps = buffer.accepted_steps()
    if not steps:
        raise RejectedInput("final Pareto buffer is empty")
    return float(np.mean(list(steps.values())))


def summarize_front(points, objectives: Sequence[ObjectiveSpec]) -> Tuple[float, ...]:
    points = list(points)
    if not points:
        raise RejectedInput("front is empty")
    mean = np.mean(np.asarray(points, dtype=float), axis=0)
    if len(mean) != len(objectives):
        raise RejectedInput("front points and objectives differ in dimension")
    return tuple(spec.raw(float(v)) for spec, v in zip(objectives, mean))


def front_summary(record: RunRecord) -> Tuple[float, ...]:
    """Per-objective mean over the final front, negated metrics un-negated."""
    return summarize_front(record.buffer.points, record.objectives)


# --- 2. Training loop ---
def _initial_weights(cfg: TrainerConfig, k: int) -> np.ndarray:
    if cfg.weighting == "gradient_based":
        if cfg.w0 is None:
            return uniform_weights(k)
        w0 = as_weights(cfg.w0, strict=True)
    else:
        if cfg.w0 is None:
            raise RejectedInput(f"{cfg.weighting} weighting needs explicit w0")
        w0 = as_weights(cfg.w0)
    if len(w0) != k:
        raise RejectedInput(f"w0 has {len(w0)} weights, environment has {k} objectives")
    return w0


def _warn_about(cfg: TrainerConfig, w0: np.ndarray) -> None:
    if cfg.weighting == "gradient_based":
        if not np.allclose(w0, uniform_weights(len(w0))):
            logger.warning("gradient-based weighting starts from non-uniform w0=%s", w0.tolist())
        if cfg.schedule == "constant":
            logger.warning("constant weight learning rate: the weight ratio bound does not hold")
    if cfg.weighting == "hypervolume_guided" and cfg.algorithm == "GRPO":
        logger.warning(
            "GRPO advantages are invariant to the common meta-reward factor within a step; "
            "hypervolume guidance only acts across steps"
        )


def _sample_groups(policy: Policy, env: MOEnvironment, cfg: TrainerConfig, step: int) -> List[RolloutGroup]:
    rng = np.random.default_rng((cfg.seed, step))
    contexts = rng.integers(env.n_contexts, size=cfg.batch_size)
    return [
        RolloutGroup(
            context=int(ctx),
            trajectories=tuple(
                sample_trajectory(policy, env, (cfg.seed, step, b, j), context=int(ctx))
                for j in range(cfg.rollout_size)
            ),
        )
        for b, ctx in enumerate(contexts)
    ]


def _policy_gradient(
    policy: Policy,
    groups: List[RolloutGroup],
    weights: np.ndarray,
    r_pareto: float,
    cfg: TrainerConfig,
) -> Tuple[np.ndarray, float]:
    """Algorithm-specific gradient and the mean scalar training reward."""
    effective = weights * r_pareto
    groups = [
        replace(
            g,
            scalar_rewards=tuple(float(returns_per_objective(t, cfg.gamma)[:, 0] @ effective) for t in g.trajectories),
        )
        for g in groups
    ]
    mean_reward = float(np.mean([g.scalar_rewards for g in groups]))
    if cfg.algorithm == "REINFORCE":
        return reinforce_gradient(policy, groups, effective, cfg.gamma), mean_reward
    advantage = rloo_advantages if cfg.algorithm == "RLOO" else grpo_advantages
    trajs, advs = [], []
    for g in groups:
        trajs.extend(g.trajectories)
        advs.extend(advantage(g.scalar_rewards))
    return advantage_gradient(policy, trajs, advs, cfg.clip), mean_reward


def _train(cfg: TrainerConfig, env: MOEnvironment, arm: str) -> RunRecord:
    k = env.n_objectives
    weights = _initial_weights(cfg, k)
    _warn_about(cfg, weights)
    schedule = None
    if cfg.weighting == "gradient_based":
        schedule = ScheduleState(cfg.schedule, cfg.eta, cfg.schedule_power)

    policy = env.make_policy(cfg.logit_bound).with_mask(cfg.mask_features)
    eval_set = make_evaluation_set(env, cfg.eval_episodes, cfg.seed, cfg.greedy_eval)
    record = RunRecord(
        arm=arm,
        seed=cfg.seed,
        weighting=cfg.weighting,
        objectives=env.objectives,
        buffer=ParetoBuffer.empty(env.reference_point()),
        initial_weights=tuple(weights.tolist()),
        config=cfg.model_dump(),
        environment=env.describe(),
    )
    logger.info(
        "arm %s seed %d: %s/%s for %d steps on %s",
        arm, cfg.seed, cfg.algorithm, cfg.weighting, cfg.max_steps, env.kind,
    )

    def _evaluate_into_buffer(step: int) -> Tuple[ObjectiveVector, float]:
        try:
            point = evaluate(policy, eval_set)
            record.buffer, delta = buffer_insert(record.buffer, point, step)
        except RejectedInput as exc:
            record.status = "aborted"
            raise RunAborted(f"evaluation at step {step} failed: {exc.detail}", record) from exc
        if delta > 0:
            logger.info("arm %s step %d: front point %s accepted (ΔHV=%.6g)", arm, step, point, delta)
        return point, delta

    point, delta = _evaluate_into_buffer(0)
    record.checkpoints[0] = policy
    record.append(
        StepEntry(step=0, weights=tuple(weights.tolist()), validation=point, delta_hv=delta,
                  accepted=delta > 0, checkpoint="step_0")
    )

    r_pareto = 1.0
    hv_guided = cfg.weighting == "hypervolume_guided"
    warned_tiny = False
    for step in range(1, cfg.max_steps + 1):
        groups = _sample_groups(policy, env, cfg, step)
        flat = [t for g in groups for t in g.trajectories]

        infl = tau = grad_norm_max = None
        if schedule is not None:
            grads = per_objective_gradients(policy, flat, cfg.gamma)
            try:
                infl = influence(grads)
            except RejectedInput as exc:
                record.status = "aborted"
                raise RunAborted(f"step {step}: {exc.detail}", record) from exc
            rate, schedule = schedule_rate(schedule)
            weights = update_weights(weights, infl, rate, cfg.mu)
            tau = rate / cfg.mu
            grad_norm_max = float(np.linalg.norm(grads, axis=1).max())
            if not warned_tiny and cfg.schedule == "constant" and weights.min() < TINY_WEIGHT:
                logger.warning("step %d: a weight fell below %g (%s)", step, TINY_WEIGHT, weights.tolist())
                warned_tiny = True

        used_r_pareto = r_pareto
        gradient, mean_reward = _policy_gradient(policy, groups, weights, used_r_pareto, cfg)
        try:
            policy = policy_update(policy, gradient, cfg.policy_lr, cfg.max_grad_norm)
        except RunAborted as exc:
            record.status = "aborted"
            exc.record = record
            raise
        env.update_statistics(flat)

        point = delta = None
        accepted = False
        if hv_guided or step % cfg.eval_every == 0 or step == cfg.max_steps:
            point, delta = _evaluate_into_buffer(step)
            accepted = delta > 0
            if hv_guided and not cfg.force_unit_meta_reward:
                r_pareto = meta_reward(delta)

        checkpoint = None
        if accepted or step % cfg.checkpoint_every == 0:
            record.checkpoints[step] = policy
            checkpoint = f"step_{step}"

        record.append(
            StepEntry(
                step=step,
                weights=tuple(weights.tolist()),
                validation=point,
                delta_hv=delta,
                accepted=accepted,
                r_pareto=used_r_pareto if hv_guided else None,
                influence=None if infl is None else tuple(infl.tolist()),
                tau=tau,
                grad_norm_max=grad_norm_max,
                train_reward_mean=mean_reward,
                checkpoint=checkpoint,
            )
        )
        logger.debug(
            "step %d: w=%s r_pareto=%.4f reward=%.4f val=%s",
            step, np.round(weights, 6).tolist(), used_r_pareto, mean_reward, point,
        )

    record.status = "completed"
    logger.info(
        "arm %s seed %d finished: %d front points, HV=%.6g",
        arm, cfg.seed, len(record.buffer.points), record.buffer.hypervolume(),
    )
    return record


def _check_weighting(cfg: TrainerConfig, expected: str) -> None:
    if cfg.weighting != expected:
        raise RejectedInput(f"expected weighting={expected}, got {cfg.weighting}")


def train_fixed(cfg: TrainerConfig, env: MOEnvironment, arm: str = "default") -> RunRecord:
    _check_weighting(cfg, "fixed")
    return _train(cfg, env, arm)


def train_hypervolume_guided(cfg: TrainerConfig, env: MOEnvironment, arm: str = "default") -> RunRecord:
    _check_weighting(cfg, "hypervolume_guided")
    return _train(cfg, env, arm)


def train_gradient_based(cfg: TrainerConfig, env: MOEnvironment, arm: str = "default") -> RunRecord:
    _check_weighting(cfg, "gradient_based")
    return _train(cfg, env, arm)


_LOOPS = {
    "fixed": train_fixed,
    "hypervolume_guided": train_hypervolume_guided,
    "gradient_based": train_gradient_based,
}


def train(cfg: TrainerConfig, env: MOEnvironment, arm: str = "default") -> RunRecord:
    return _LOOPS[cfg.weighting](cfg, env, arm)


# --- 3. Persistence ---
def run_summary(record: RunRecord) -> dict:
    """The summary.json payload of a run."""
    summary = {
        "arm": record.arm,
        "seed": record.seed,
        "weighting": record.weighting,
        "status": record.status,
        "objectives": [o.name for o in record.objectives],
        "negated": [o.negated for o in record.objectives],
        "scale": [o.scale for o in record.objectives],
        "reference": list(record.buffer.reference),
        "hypervolume": record.buffer.hypervolume(),
        "final_weights": list(record.final_weights),
        "config": record.config,
        "environment": record.environment,
    }
    if record.buffer.points:
        summary["front_summary"] = dict(zip(summary["objectives"], front_summary(record)))
        summary["steps_to_front"] = steps_to_front(record)
    return summary


def save_run(record: RunRecord, run_dir) -> Path:
    """Write records.jsonl, front.json, summary.json, checkpoints and metadata."""
    run_dir = Path(run_dir)
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    with open(run_dir / "records.jsonl", "w") as f:
        for entry in record.entries:
            f.write(json.dumps(entry.to_json(), sort_keys=True) + "\n")
    with open(run_dir / "front.json", "w") as f:
        json.dump(record.buffer.to_json(), f, sort_keys=True, indent=2)
    with open(run_dir / "summary.json", "w") as f:
        json.dump(run_summary(record), f, sort_keys=True, indent=2)
    for step, policy in sorted(record.checkpoints.items()):
        save_policy(policy, run_dir / "checkpoints" / f"step_{step}.json", step)
    with open(run_dir / "metadata.json", "w") as f:
        json.dump(
            {
                "written_at": datetime.now(timezone.utc).isoformat(),
                "host": platform.node(),
                "python": sys.version.split()[0],
            },
            f,
            indent=2,
        )
    logger.info("run written to %s", run_dir)
    return run_dir


@dataclass
class StoredRun:
    """A run read back from disk, for comparison and export."""

    path: Path
    summary: dict
    buffer: ParetoBuffer
    entries: List[StepEntry]
    checkpoints: Dict[int, Path]

    @property
    def objectives(self) -> Tuple[ObjectiveSpec, ...]:
        scales = self.summary.get("scale") or [1.0] * len(self.summary["objectives"])
        return tuple(
            ObjectiveSpec(n, neg, s)
            for n, neg, s in zip(self.summary["objectives"], self.summary["negated"], scales)
        )

    @property
    def initial_weights(self) -> Tuple[float, ...]:
        return self.entries[0].weights

    def weight_trace(self):
        return weight_trace(self.entries)


def load_run(run_dir) -> StoredRun:
    run_dir = Path(run_dir)
    try:
        with open(run_dir / "summary.json") as f:
            summary = json.load(f)
        with open(run_dir / "front.json") as f:
            buffer = ParetoBuffer.from_json(json.load(f))
        with open(run_dir / "records.jsonl") as f:
            entries = [StepEntry.from_json(json.loads(line)) for line in f if line.strip()]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise RejectedInput(f"{run_dir} is not a readable run directory: {exc}") from exc
    checkpoints = {}
    for path in (run_dir / "checkpoints").glob("step_*.json"):
        checkpoints[int(path.stem.split("_", 1)[1])] = path
    return StoredRun(path=run_dir, summary=summary, buffer=buffer, entries=entries, checkpoints=checkpoints)
