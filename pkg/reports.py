"""Read-only reports over completed runs: front comparison and CSV exports."""

import csv
import itertools
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from exceptions import RejectedInput
from pareto_core import hypervolume, pareto_filter, unsupported_points, weakly_dominates
from rl_core import load_policy, policy_kl
from trainer import StoredRun, load_run, steps_to_front
from weighting import meta_reward

logger = logging.getLogger(__name__)

EXPORTS = ("weights", "meta-reward", "fronts", "kl", "validation")


def run_label(run: StoredRun) -> str:
    return f"{run.summary.get('arm', run.path.name)}/seed_{run.summary.get('seed', 0)}"


def front_relation(a, b) -> str:
    """How front ``a`` relates to front ``b`` under set dominance."""
    a_covers = all(any(weakly_dominates(p, q) for p in a) for q in b)
    b_covers = all(any(weakly_dominates(q, p) for q in b) for p in a)
    if a_covers and b_covers:
        return "equal"
    if a_covers:
        return "dominates"
    if b_covers:
        return "dominated"
    return "incomparable"


# --- 1. Compare ---
def compare_runs(run_dirs: Sequence, out_dir=None) -> dict:
    runs = [load_run(d) for d in run_dirs]
    if len(runs) < 2:
        raise RejectedInput("compare needs at least two runs")
    reference = runs[0].buffer.reference
    names = runs[0].summary["objectives"]
    for run in runs[1:]:
        if run.buffer.reference != reference or run.summary["objectives"] != names:
            raise RejectedInput(f"{run.path} was produced on a different environment or reference point")

    labels = [run_label(r) for r in runs]
    union_points = set().union(*(r.buffer.points for r in runs))
    union = pareto_filter(union_points) if union_points else frozenset()
    concave = unsupported_points(union) if union else frozenset()

    rows = []
    for label, run in zip(labels, runs):
        rows.append(
            {
                "run": label,
                "path": str(run.path),
                "front_size": len(run.buffer.points),
                "hypervolume": run.buffer.hypervolume(),
                "steps_to_front": steps_to_front(run) if run.buffer.points else None,
                "union_points": len(run.buffer.points & union),
                "concave_points": len(run.buffer.points & concave),
            }
        )
    relations = {}
    for (la, ra), (lb, rb) in itertools.combinations(zip(labels, runs), 2):
        relations[f"{la} vs {lb}"] = front_relation(ra.buffer.points, rb.buffer.points)

    report = {
        "objectives": names,
        "reference": list(reference),
        "runs": rows,
        "relations": relations,
        "union": {
            "points": [list(p) for p in sorted(union)],
            "hypervolume": hypervolume(union, reference),
            "concave_points": len(concave),
        },
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "comparison.json", "w") as f:
            json.dump(report, f, indent=2, sort_keys=True)
        _write_csv(out_dir / "comparison.csv", list(rows[0].keys()), [list(r.values()) for r in rows])
        logger.info("comparison of %d runs written to %s", len(runs), out_dir)
    return report


# --- 2. Export ---
def _write_csv(path: Path, header: Sequence[str], rows: List[Sequence]) -> Path:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def export_weights(run: StoredRun, out_dir: Path) -> List[Path]:
    header = ["step"] + [f"w_{name}" for name in run.summary["objectives"]]
    rows = [[e.step, *e.weights] for e in run.entries]
    return [_write_csv(out_dir / "weights.csv", header, rows)]


def export_meta_reward(run: StoredRun, out_dir: Path) -> List[Path]:
    """Meta-reward each evaluation earns (applied or not, depending on the arm)."""
    rows = [
        [e.step, e.delta_hv, meta_reward(e.delta_hv), e.r_pareto]
        for e in run.entries
        if e.delta_hv is not None
    ]
    return [_write_csv(out_dir / "meta_reward.csv", ["step", "delta_hv", "meta_reward", "r_pareto_applied"], rows)]


def export_fronts(run: StoredRun, out_dir: Path) -> List[Path]:
    names = run.summary["objectives"]
    points = sorted(run.buffer.points)
    paths = []
    for i, j in itertools.combinations(range(len(names)), 2):
        rows = [[p[i], p[j]] for p in points]
        paths.append(_write_csv(out_dir / f"front_{i}_{j}.csv", [names[i], names[j]], rows))
    return paths


def export_validation(run: StoredRun, out_dir: Path) -> List[Path]:
    """Validation objectives per evaluated step, in their reported orientation."""
    specs = run.objectives
    rows = [
        [e.step, *(spec.raw(v) for spec, v in zip(specs, e.validation))]
        for e in run.entries
        if e.validation is not None
    ]
    return [_write_csv(out_dir / "validation.csv", ["step"] + [spec.name for spec in specs], rows)]


def export_kl(run: StoredRun, other: Optional[StoredRun], out_dir: Path) -> List[Path]:
    if other is None:
        raise RejectedInput("kl export needs a second run (--against)")
    common = sorted(set(run.checkpoints) & set(other.checkpoints))
    if not common:
        raise RejectedInput(f"{run.path} and {other.path} share no checkpoint steps")
    rows = []
    for step in common:
        p = load_policy(run.checkpoints[step])
        q = load_policy(other.checkpoints[step])
        rows.append([step, policy_kl(p, q)])
    return [_write_csv(out_dir / "kl.csv", ["step", "kl"], rows)]


def export_run(run_dir, what: str, out_dir=None, against=None) -> List[Path]:
    if what not in EXPORTS:
        raise RejectedInput(f"unknown export {what!r}; choose from {', '.join(EXPORTS)}")
    run = load_run(run_dir)
    out_dir = Path(out_dir) if out_dir is not None else run.path / "export"
    out_dir.mkdir(parents=True, exist_ok=True)
    if what == "weights":
        paths = export_weights(run, out_dir)
    elif what == "meta-reward":
        paths = export_meta_reward(run, out_dir)
    elif what == "fronts":
        paths = export_fronts(run, out_dir)
    elif what == "validation":
        paths = export_validation(run, out_dir)
    else:
        paths = export_kl(run, load_run(against) if against is not None else None, out_dir)
    logger.info("exported %s: %s", what, ", ".join(str(p) for p in paths))
    return paths


def summarize_sweep(summaries: Dict[int, dict]) -> dict:
    """Per-arm aggregate over seeds: best-converging seed and all-seed means."""
    done = {s: d for s, d in summaries.items() if d.get("steps_to_front") is not None}
    hv = [d["hypervolume"] for d in summaries.values()]
    out = {
        "seeds": sorted(summaries),
        "hypervolume": {str(s): d["hypervolume"] for s, d in sorted(summaries.items())},
        "steps_to_front": {str(s): d.get("steps_to_front") for s, d in sorted(summaries.items())},
        "mean_hypervolume": sum(hv) / len(hv) if hv else None,
    }
    if done:
        best = min(done, key=lambda s: (done[s]["steps_to_front"], s))
        out["best_seed"] = best
        out["mean_steps_to_front"] = sum(d["steps_to_front"] for d in done.values()) / len(done)
    return out
