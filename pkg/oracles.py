"""Brute-force verifications behind ``app.py oracle``.

Each check returns an ``OracleReport``; the command line turns a failed report
into a non-zero exit.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from environments import DeepSeaTreasure, MOEnvironment, true_pareto_front
from exceptions import RejectedInput
from pareto_core import hypervolume, mc_hypervolume, unsupported_points
from rl_core import exact_gradient_oracle, exact_objective
from weighting import closed_form_weights, ratio_bound

logger = logging.getLogger(__name__)


@dataclass
class OracleReport:
    name: str
    passed: bool
    metrics: Dict[str, float] = field(default_factory=dict)
    lines: List[str] = field(default_factory=list)

    def render(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        head = [f"{self.name}: {status}"]
        head += [f"  {k} = {v:.6g}" for k, v in sorted(self.metrics.items())]
        return "\n".join(head + [f"  {line}" for line in self.lines])


# --- 1. Hypervolume ---
def inclusion_exclusion_hv(points: Sequence[Sequence[float]], ref: Sequence[float]) -> float:
    """Union volume by summing signed intersections over all 2^n − 1 subsets."""
    arr = np.asarray(points, dtype=float)
    ref = np.asarray(ref, dtype=float)
    n = len(arr)
    if n > 20:
        raise RejectedInput(f"inclusion-exclusion over {n} points is too large")
    total = 0.0
    for size in range(1, n + 1):
        sign = 1.0 if size % 2 else -1.0
        for subset in itertools.combinations(range(n), size):
            corner = arr[list(subset)].min(axis=0)
            total += sign * float(np.prod(np.maximum(corner - ref, 0.0)))
    return total


def random_instance(rng: np.random.Generator, k: int, n: int) -> np.ndarray:
    return rng.uniform(1e-3, 1.0, size=(n, k))


def hv_check(
    instances: int = 100,
    samples: int = 1_000_000,
    seed: int = 0,
    sigmas: float = 3.0,
    rtol: float = 1e-9,
    sampler: str = "sobol",
) -> OracleReport:
    """Exact HV against inclusion-exclusion and a Monte Carlo estimate."""
    rng = np.random.default_rng(seed)
    worst_rel = 0.0
    worst_z = 0.0
    failures = []
    for i in range(instances):
        k = int(rng.choice([2, 3, 4]))
        n = int(rng.integers(1, 13))
        pts = random_instance(rng, k, n)
        ref = np.zeros(k)
        exact = hypervolume(pts, ref)
        brute = inclusion_exclusion_hv(pts, ref)
        rel = abs(exact - brute) / max(abs(brute), 1e-300)
        worst_rel = max(worst_rel, rel)
        estimate, stderr = mc_hypervolume(pts, ref, np.ones(k), samples, seed=seed * 7919 + i, sampler=sampler)
        z = abs(estimate - exact) / stderr if stderr > 0 else (0.0 if estimate == exact else np.inf)
        worst_z = max(worst_z, z)
        if rel > rtol or z > sigmas:
            failures.append(f"instance {i} (K={k}, n={n}): rel={rel:.3g}, z={z:.3g}")
    report = OracleReport(
        name="hv-check",
        passed=not failures,
        metrics={"instances": instances, "max_rel_error": worst_rel, "max_z": worst_z},
        lines=failures,
    )
    return report


# --- 2. Gradients ---
def finite_difference_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences, one coordinate at a time."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(len(x)):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (f(x + step) - f(x - step)) / (2.0 * h)
        logger.debug("fd coordinate %d: %.12g", i, grad[i])
    return grad


def small_deep_sea() -> DeepSeaTreasure:
    """Two-column gridworld small enough to enumerate every trajectory."""
    return DeepSeaTreasure(depths=[1, 2], treasures=[1.0, 2.0], horizon=3)


def grad_check(
    env: Optional[MOEnvironment] = None,
    seed: int = 0,
    trials: int = 5,
    gamma: float = 1.0,
    rtol: float = 1e-6,
    h: float = 1e-5,
) -> OracleReport:
    """Enumerated REINFORCE expectation against finite differences of exact J."""
    env = env if env is not None else small_deep_sea()
    rng = np.random.default_rng(seed)
    base = env.make_policy()
    worst = 0.0
    failures = []
    for trial in range(trials):
        w = rng.dirichlet(np.ones(env.n_objectives))
        theta = rng.normal(0.0, 1.0, size=base.dim)
        policy = base.with_theta(theta)
        analytic = exact_gradient_oracle(policy, env, w, gamma)
        numeric = finite_difference_gradient(
            lambda th: exact_objective(base.with_theta(th), env, w, gamma), theta, h
        )
        rel = float(np.max(np.abs(analytic - numeric)) / max(np.linalg.norm(analytic), 1e-8))
        worst = max(worst, rel)
        if rel > rtol:
            failures.append(f"trial {trial}: relative error {rel:.3g}")
    return OracleReport(
        name="grad-check",
        passed=not failures,
        metrics={"trials": trials, "parameters": base.dim, "max_rel_error": worst},
        lines=failures,
    )


# --- 3. Weight trace replay ---
def lemma_check(run, atol: float = 1e-8) -> OracleReport:
    """Replay a gradient-based run's (tau, influence) trace in closed form.

    ``run`` is a RunRecord or a StoredRun. Also checks every recorded weight
    ratio against the ceiling implied by the largest observed gradient norm.
    """
    taus, infls = run.weight_trace()
    if not taus:
        raise RejectedInput("run has no weight-update trace (not a gradient-based run?)")
    w0 = np.asarray(run.initial_weights, dtype=float)
    final = np.asarray(run.entries[-1].weights, dtype=float)
    replay = closed_form_weights(w0, taus, infls)
    error = float(np.max(np.abs(replay - final)))

    k = len(w0)
    c = max(e.grad_norm_max for e in run.entries if e.grad_norm_max is not None)
    ell = float(np.sum(taus))
    worst_margin = -np.inf
    if c > 0:
        for e in run.entries:
            w = np.asarray(e.weights)
            for i, j in itertools.permutations(range(k), 2):
                bound = ratio_bound(w0[i], w0[j], k, c, ell)
                worst_margin = max(worst_margin, w[i] / w[j] - bound)
    lines = []
    if error > atol:
        lines.append(f"closed form differs from the recorded weights by {error:.3g}")
    if worst_margin > 0:
        lines.append(f"a weight ratio exceeds its ceiling by {worst_margin:.3g}")
    return OracleReport(
        name="lemma-check",
        passed=not lines,
        metrics={"updates": len(taus), "max_abs_error": error, "tau_sum": ell, "gradient_bound": c},
        lines=lines,
    )


# --- 4. Front enumeration ---
def front_enum(env: MOEnvironment) -> OracleReport:
    front = sorted(true_pareto_front(env))
    concave = unsupported_points(front)
    lines = [f"{'*' if p in concave else ' '} {p}" for p in front]
    lines.append(
        f"{len(concave)} of {len(front)} front points lie in concave regions (marked *)"
        if concave
        else "front is convex: every point is supported by some weighting"
    )
    return OracleReport(
        name="front-enum",
        passed=len(front) > 0,
        metrics={
            "front_size": len(front),
            "unsupported": len(concave),
            "hypervolume": hypervolume(front, env.reference_point()),
        },
        lines=lines,
    )
