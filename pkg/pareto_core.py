"""Pareto dominance, exact hypervolume and the performance buffer.

All objective vectors are oriented "larger is better". Points are handled as
tuples of floats so that sets of points have value semantics (duplicates are
stored once).
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, List, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.stats import qmc

from exceptions import RejectedInput

logger = logging.getLogger(__name__)

ObjectiveVector = Tuple[float, ...]


def as_objective(values: Iterable[float]) -> ObjectiveVector:
    """Validate and freeze a point of objective space."""
    point = tuple(float(v) for v in values)
    if len(point) < 1:
        raise RejectedInput("objective vector must have at least one component")
    if not all(math.isfinite(v) for v in point):
        raise RejectedInput(f"objective vector has non-finite components: {point}")
    return point


def _as_point_set(points: Iterable[Iterable[float]]) -> List[ObjectiveVector]:
    unique = sorted({as_objective(p) for p in points})
    if unique:
        dims = {len(p) for p in unique}
        if len(dims) != 1:
            raise RejectedInput(f"points have mixed dimensions {sorted(dims)}")
    return unique


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """True iff ``a`` is >= ``b`` everywhere and differs somewhere."""
    a, b = as_objective(a), as_objective(b)
    if len(a) != len(b):
        raise RejectedInput(f"dimension mismatch: {len(a)} vs {len(b)}")
    return all(x >= y for x, y in zip(a, b)) and a != b


def weakly_dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    return all(x >= y for x, y in zip(a, b))


def pareto_filter(points: Iterable[Iterable[float]]) -> FrozenSet[ObjectiveVector]:
    """Return exactly the non-dominated subset of ``points``."""
    candidates = _as_point_set(points)
    if not candidates:
        raise RejectedInput("pareto_filter needs at least one point")
    arr = np.asarray(candidates, dtype=float)
    keep = np.ones(len(arr), dtype=bool)
    for i in range(len(arr)):
        # any other point >= everywhere and > somewhere (duplicates already removed)
        geq = np.all(arr >= arr[i], axis=1)
        gt = np.any(arr > arr[i], axis=1)
        if np.any(geq & gt):
            keep[i] = False
    return frozenset(candidates[i] for i in np.flatnonzero(keep))


def _check_above_reference(points: Sequence[ObjectiveVector], ref: ObjectiveVector) -> None:
    for p in points:
        if len(p) != len(ref):
            raise RejectedInput(f"point {p} and reference {ref} differ in dimension")
        if not weakly_dominates(p, ref):
            raise RejectedInput(f"point {p} lies below the reference point {ref}")


def _sweep_2d(arr: np.ndarray, ref: np.ndarray) -> float:
    # sort by first coordinate descending; the second coordinate staircase
    order = np.lexsort((-arr[:, 1], -arr[:, 0]))
    volume = 0.0
    best_y = ref[1]
    for x, y in arr[order]:
        if y > best_y:
            volume += (x - ref[0]) * (y - best_y)
            best_y = y
    return float(volume)


def _slice_volume(arr: np.ndarray, ref: np.ndarray) -> float:
    k = arr.shape[1]
    if len(arr) == 0:
        return 0.0
    if k == 1:
        return float(arr[:, 0].max() - ref[0])
    if k == 2:
        return _sweep_2d(arr, ref)
    # sweep the last coordinate from the top; each slab is a (k-1)-dim volume
    order = np.argsort(-arr[:, -1], kind="stable")
    arr = arr[order]
    volume = 0.0
    for i in range(len(arr)):
        upper = arr[i, -1]
        lower = arr[i + 1, -1] if i + 1 < len(arr) else ref[-1]
        height = upper - lower
        if height <= 0.0:
            continue
        volume += height * _slice_volume(arr[: i + 1, :-1], ref[:-1])
    return float(volume)


def hypervolume(points: Iterable[Iterable[float]], ref: Sequence[float]) -> float:
    """Lebesgue measure of the union of boxes [ref, p] over ``points``.

    K=2 uses a sort-and-sweep, K>=3 sweeps the last coordinate and recurses on
    the remaining ones (dimension sweep). Dominated points are filtered first.
    """
    ref = as_objective(ref)
    pts = _as_point_set(points)
    _check_above_reference(pts, ref)
    if not pts:
        return 0.0
    front = sorted(pareto_filter(pts))
    return _slice_volume(np.asarray(front, dtype=float), np.asarray(ref, dtype=float))


def hypervolume_contribution(
    a: Sequence[float], points: Iterable[Iterable[float]], ref: Sequence[float]
) -> float:
    """HV(points ∪ {a}) − HV(points \\ {a}); zero when ``a`` is already covered."""
    a = as_objective(a)
    ref = as_objective(ref)
    others = [p for p in _as_point_set(points) if p != a]
    _check_above_reference(others + [a], ref)
    if any(weakly_dominates(p, a) for p in others):
        return 0.0
    delta = hypervolume(others + [a], ref) - hypervolume(others, ref)
    return max(0.0, delta)


@dataclass(frozen=True)
class BufferEvent:
    step: int
    point: ObjectiveVector
    accepted: bool
    delta_hv: float

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "point": list(self.point),
            "accepted": self.accepted,
            "delta_hv": self.delta_hv,
        }


@dataclass(frozen=True)
class ParetoBuffer:
    """Archive of mutually non-dominated validation points."""

    reference: ObjectiveVector
    points: FrozenSet[ObjectiveVector] = frozenset()
    history: Tuple[BufferEvent, ...] = field(default_factory=tuple)

    @classmethod
    def empty(cls, reference: Sequence[float]) -> "ParetoBuffer":
        return cls(reference=as_objective(reference))

    def hypervolume(self) -> float:
        return hypervolume(self.points, self.reference)

    def accepted_steps(self) -> Dict[ObjectiveVector, int]:
        """Step at which each surviving point first entered the buffer."""
        steps = {}
        for event in self.history:
            if event.accepted and event.point in self.points:
                steps.setdefault(event.point, event.step)
        return steps

    def to_json(self) -> dict:
        return {
            "reference": list(self.reference),
            "points": [list(p) for p in sorted(self.points)],
            "history": [e.to_json() for e in self.history],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ParetoBuffer":
        history = tuple(
            BufferEvent(
                step=int(e["step"]),
                point=as_objective(e["point"]),
                accepted=bool(e["accepted"]),
                delta_hv=float(e["delta_hv"]),
            )
            for e in data.get("history", [])
        )
        return cls(
            reference=as_objective(data["reference"]),
            points=frozenset(as_objective(p) for p in data["points"]),
            history=history,
        )


def buffer_insert(
    buffer: ParetoBuffer, candidate: Sequence[float], step: int
) -> Tuple[ParetoBuffer, float]:
    """Insert ``candidate`` when it adds hypervolume; always log the attempt.

    Returns the new buffer and the contribution measured before insertion.
    """
    candidate = as_objective(candidate)
    if len(candidate) != len(buffer.reference) or not weakly_dominates(candidate, buffer.reference):
        raise RejectedInput(
            f"candidate {candidate} does not dominate the reference {buffer.reference}"
        )
    # a point already archived adds no volume to the buffer
    if candidate in buffer.points:
        delta = 0.0
    else:
        delta = hypervolume_contribution(candidate, buffer.points, buffer.reference)
    accepted = delta > 0.0
    points = buffer.points
    if accepted:
        survivors = {p for p in points if not weakly_dominates(candidate, p)}
        survivors.add(candidate)
        points = frozenset(survivors)
        logger.debug("step %d: accepted %s (ΔHV=%.6g)", step, candidate, delta)
    event = BufferEvent(step=step, point=candidate, accepted=accepted, delta_hv=delta)
    return replace(buffer, points=points, history=buffer.history + (event,)), delta


def mc_hypervolume(
    points: Iterable[Iterable[float]],
    ref: Sequence[float],
    bound: Sequence[float],
    samples: int,
    seed: int,
    chunk: int = 100_000,
    sampler: str = "uniform",
) -> Tuple[float, float]:
    """Monte Carlo hypervolume estimate and its binomial standard error.

    ``sampler="sobol"`` draws a scrambled Sobol sequence instead of iid
    uniforms, rounded up to the next power of two points. Its error is
    well inside the binomial standard error, which is still what gets
    returned.
    """
    ref = np.asarray(as_objective(ref))
    bound = np.asarray(as_objective(bound))
    pts = _as_point_set(points)
    if samples < 1:
        raise RejectedInput("samples must be >= 1")
    if sampler not in ("uniform", "sobol"):
        raise RejectedInput(f"unknown sampler {sampler!r}")
    if len(bound) != len(ref) or np.any(bound <= ref):
        raise RejectedInput(f"degenerate sampling box [{ref.tolist()}, {bound.tolist()}]")
    if not pts:
        return 0.0, 0.0
    arr = np.asarray(pts, dtype=float)
    if arr.shape[1] != len(ref):
        raise RejectedInput("points and reference differ in dimension")
    if np.any(arr > bound):
        raise RejectedInput("sampling bound must dominate every point")
    volume = float(np.prod(bound - ref))
    if sampler == "sobol":
        draws = qmc.Sobol(d=len(ref), scramble=True, seed=seed).random_base2(m=max(0, math.ceil(math.log2(samples))))
        blocks = (qmc.scale(draws[i : i + chunk], ref, bound) for i in range(0, len(draws), chunk))
        samples = len(draws)
    else:
        rng = np.random.default_rng(seed)
        sizes = [min(chunk, samples - i) for i in range(0, samples, chunk)]
        blocks = (rng.uniform(ref, bound, size=(n, len(ref))) for n in sizes)
    hits = 0
    for x in blocks:
        covered = np.zeros(len(x), dtype=bool)
        for p in arr:
            covered |= np.all(x <= p, axis=1)
        hits += int(covered.sum())
    frac = hits / samples
    stderr = volume * math.sqrt(frac * (1.0 - frac) / samples)
    return volume * frac, stderr


def unsupported_points(front: Iterable[Iterable[float]], tol: float = 1e-9) -> FrozenSet[ObjectiveVector]:
    """Front points strictly dominated by a convex combination of the others.

    These are the points of the concave regions of a front that no weighted
    sum of objectives can select.
    """
    pts = sorted(pareto_filter(front))
    found = set()
    if len(pts) < 3:
        return frozenset()
    arr = np.asarray(pts, dtype=float)
    k = arr.shape[1]
    for i, p in enumerate(arr):
        others = np.delete(arr, i, axis=0)
        m = len(others)
        # variables: lambda_1..lambda_m, s ; maximize s
        c = np.zeros(m + 1)
        c[-1] = -1.0
        a_ub = np.hstack([-others.T, np.ones((k, 1))])
        b_ub = -p
        a_eq = np.hstack([np.ones((1, m)), np.zeros((1, 1))])
        bounds = [(0.0, None)] * m + [(None, None)]
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=bounds, method="highs")
        if res.status == 0 and -res.fun > tol:
            found.add(pts[i])
    return frozenset(found)
