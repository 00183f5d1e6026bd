"""Reward weighting math: meta-reward, scalarization, influence and the
exponentiated (entropic mirror descent) weight update.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Literal, Sequence, Tuple

import numpy as np
from scipy.special import zeta

from exceptions import RejectedInput

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-12
# largest double below 2.0; tanh saturates to exactly 1.0 in float64
_META_REWARD_CEILING = math.nextafter(2.0, 0.0)


def as_weights(values: Sequence[float], strict: bool = False, tol: float = 1e-9) -> np.ndarray:
    """Validate a weight vector on the simplex.

    ``strict`` requires every weight to be positive, which the exponentiated
    update needs (a zero weight can never recover).
    """
    w = np.asarray(values, dtype=float)
    if w.ndim != 1 or len(w) == 0:
        raise RejectedInput("weights must be a non-empty vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise RejectedInput(f"weights must be finite and non-negative: {w.tolist()}")
    if strict and np.any(w <= 0):
        raise RejectedInput(f"weights must be strictly positive: {w.tolist()}")
    if abs(w.sum() - 1.0) > tol:
        raise RejectedInput(f"weights must sum to 1, got {w.sum()!r}")
    return w


def uniform_weights(k: int) -> np.ndarray:
    return np.full(k, 1.0 / k)


def meta_reward(delta_hv: float) -> float:
    """0.5 + 1.5·tanh(ΔHV); 0.5 for a dominated checkpoint, below 2.0 always."""
    if not math.isfinite(delta_hv) or delta_hv < 0:
        raise RejectedInput(f"hypervolume contribution must be >= 0, got {delta_hv!r}")
    return min(0.5 + 1.5 * math.tanh(delta_hv), _META_REWARD_CEILING)


def scalarize(w: Sequence[float], r: Sequence[float]) -> float:
    w = np.asarray(w, dtype=float)
    r = np.asarray(r, dtype=float)
    if w.shape != r.shape:
        raise RejectedInput(f"weights {w.shape} and rewards {r.shape} differ in dimension")
    return float(np.dot(w, r))


def influence(per_objective_grads: Sequence[Sequence[float]]) -> np.ndarray:
    """I_i = <g_i, sum_k g_k>, computed from one gradient snapshot."""
    grads = np.asarray(per_objective_grads, dtype=float)
    if grads.ndim != 2:
        raise RejectedInput("expected a K x D matrix of per-objective gradients")
    if not np.all(np.isfinite(grads)):
        raise RejectedInput("per-objective gradients contain non-finite values")
    return grads @ grads.sum(axis=0)


def update_weights(w: Sequence[float], infl: Sequence[float], eta: float, mu: float) -> np.ndarray:
    """w_i <- w_i·exp(eta·I_i/mu), renormalized to the simplex."""
    w = np.asarray(w, dtype=float)
    infl = np.asarray(infl, dtype=float)
    if mu <= 0:
        raise RejectedInput(f"regularization factor mu must be > 0, got {mu!r}")
    if eta < 0:
        raise RejectedInput(f"learning rate eta must be >= 0, got {eta!r}")
    if w.shape != infl.shape:
        raise RejectedInput("weights and influence differ in dimension")
    if not np.all(np.isfinite(infl)):
        raise RejectedInput("influence contains non-finite values")
    exponent = eta * infl / mu
    exponent = exponent - exponent.max()
    unnorm = w * np.exp(exponent)
    return unnorm / unnorm.sum()


def closed_form_weights(
    w0: Sequence[float], tau_seq: Sequence[float], infl_seq: Sequence[Sequence[float]]
) -> np.ndarray:
    """Weights after T updates in one shot: w0·exp(sum_t tau_t·I_t), normalized."""
    w0 = np.asarray(w0, dtype=float)
    if len(tau_seq) != len(infl_seq):
        raise RejectedInput(f"tau ({len(tau_seq)}) and influence ({len(infl_seq)}) lengths differ")
    total = np.zeros_like(w0)
    for tau, infl in zip(tau_seq, infl_seq):
        total = total + tau * np.asarray(infl, dtype=float)
    total = total - total.max()
    unnorm = w0 * np.exp(total)
    return unnorm / unnorm.sum()


def ratio_bound(w0_i: float, w0_j: float, k: int, c: float, ell: float) -> float:
    """Ceiling on w_i/w_j when gradients are bounded by C and sum(tau) -> ell."""
    if w0_i <= 0 or w0_j <= 0 or k <= 0 or c <= 0 or ell < 0:
        raise RejectedInput("ratio_bound needs positive weights, K, C and ell >= 0")
    return (w0_i / w0_j) * math.exp(2.0 * k * c * c * ell)


def check_simplex(w: np.ndarray) -> bool:
    return bool(np.all(w > 0) and abs(w.sum() - 1.0) <= SIMPLEX_TOL)


# --- learning-rate schedules ---


@dataclass(frozen=True)
class ScheduleState:
    kind: Literal["constant", "polynomial"]
    base_rate: float
    power: float = 1.03
    step: int = 0

    def __post_init__(self):
        if self.kind not in ("constant", "polynomial"):
            raise RejectedInput(f"unknown schedule kind {self.kind!r}")
        if self.base_rate <= 0:
            raise RejectedInput("schedule base rate must be > 0")
        if self.kind == "polynomial" and self.power <= 1:
            raise RejectedInput(
                f"polynomial power must be > 1 for a convergent step-size sum, got {self.power}"
            )
        if self.step < 0:
            raise RejectedInput("schedule step must be >= 0")

    def total(self) -> float:
        """Limit of the cumulative rate sum (inf for a constant schedule)."""
        if self.kind == "constant":
            return math.inf
        return float(self.base_rate * zeta(self.power, 1))


def schedule_rate(state: ScheduleState) -> Tuple[float, ScheduleState]:
    if state.kind == "constant":
        rate = state.base_rate
    else:
        rate = state.base_rate / (state.step + 1) ** state.power
    return rate, replace(state, step=state.step + 1)
