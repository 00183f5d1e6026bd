"""Command line entry point: ``python app.py run|compare|oracle|export``."""

import argparse
import json
import logging
import logging.config
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from config import (
    LOGGING_INI,
    DeepSeaTreasureConfig,
    EnvironmentConfig,
    TrainerConfig,
    load_harness_config,
)
from environments import deep_sea_treasure, make_environment
from exceptions import ConfigError, MorlError, OracleFailure, RunAborted
from oracles import front_enum, grad_check, hv_check, lemma_check
from reports import EXPORTS, compare_runs, export_run, summarize_sweep
from trainer import load_run, save_run, train

logger = logging.getLogger("morl")


# --- 1. Logging ---
def setup_logging(verbose: bool = False) -> None:
    if Path(LOGGING_INI).exists():
        logging.config.fileConfig(LOGGING_INI, disable_existing_loggers=False)
    else:
        logging.basicConfig(level=logging.INFO, format="%(levelname)-5.5s [%(name)s] %(message)s")
    if verbose:
        for name in ("", "morl", "trainer", "pareto_core"):
            logging.getLogger(name).setLevel(logging.DEBUG)


# --- 2. run ---
def run_one(env_cfg: EnvironmentConfig, cfg: TrainerConfig, arm: str, run_dir: Path) -> dict:
    """Train one (arm, seed) pair into its own directory; returns its summary."""
    env = make_environment(env_cfg)
    try:
        record = train(cfg, env, arm)
    except RunAborted as exc:
        if exc.record is not None:
            save_run(exc.record, run_dir)
        raise
    save_run(record, run_dir)
    with open(run_dir / "summary.json") as f:
        return json.load(f)


def plan_runs(
    arms: Dict[str, TrainerConfig], n_seeds: int, seed: Optional[int]
) -> List[Tuple[str, TrainerConfig]]:
    jobs = []
    for name, cfg in arms.items():
        seeds = [seed] if seed is not None else [cfg.seed + i for i in range(n_seeds)]
        for s in seeds:
            jobs.append((name, cfg.model_copy(update={"seed": s})))
    return jobs


def cmd_run(args) -> int:
    harness = load_harness_config(args.config, args.override or ())
    arms = harness.arms
    if args.arm:
        missing = [a for a in args.arm if a not in arms]
        if missing:
            raise ConfigError(f"unknown arm(s) {', '.join(missing)}; configured: {', '.join(arms)}")
        arms = {a: arms[a] for a in args.arm}
    out_root = Path(args.out) if args.out else harness.output_root
    parallel = args.parallel or harness.harness.parallel
    jobs = plan_runs(arms, harness.harness.n_seeds, args.seed)
    logger.info("%d run(s) into %s (parallel=%d)", len(jobs), out_root, parallel)

    summaries: Dict[str, Dict[int, dict]] = {}
    dirs = [out_root / name / f"seed_{cfg.seed}" for name, cfg in jobs]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            futures = [
                pool.submit(run_one, harness.environment, cfg, name, d) for (name, cfg), d in zip(jobs, dirs)
            ]
            results = [f.result() for f in futures]
    else:
        results = [run_one(harness.environment, cfg, name, d) for (name, cfg), d in zip(jobs, dirs)]

    for (name, cfg), summary in zip(jobs, results):
        summaries.setdefault(name, {})[cfg.seed] = summary
        print(f"{name:<24} seed {cfg.seed:<4} HV={summary['hypervolume']:.6g} "
              f"steps_to_front={summary.get('steps_to_front')}")

    for name, per_seed in summaries.items():
        if len(per_seed) > 1:
            sweep = summarize_sweep(per_seed)
            with open(out_root / name / "sweep.json", "w") as f:
                json.dump(sweep, f, indent=2, sort_keys=True)
            logger.info("arm %s: mean HV %.6g over %d seeds", name, sweep["mean_hypervolume"], len(per_seed))
    return 0


# --- 3. compare / export ---
def cmd_compare(args) -> int:
    report = compare_runs(args.runs, args.out)
    for row in report["runs"]:
        print(f"{row['run']:<32} HV={row['hypervolume']:.6g} points={row['front_size']} "
              f"steps_to_front={row['steps_to_front']} concave={row['concave_points']}")
    for pair, relation in report["relations"].items():
        print(f"{pair}: {relation}")
    print(f"union front: {len(report['union']['points'])} points, HV={report['union']['hypervolume']:.6g}")
    return 0


def cmd_export(args) -> int:
    for path in export_run(args.run, args.what, args.out, args.against):
        print(path)
    return 0


# --- 4. oracle ---
def _oracle_environment(config: Optional[str]):
    if config is None:
        return deep_sea_treasure(DeepSeaTreasureConfig(kind="deep_sea_treasure"))
    return make_environment(load_harness_config(config).environment)


def cmd_oracle(args) -> int:
    if args.check == "hv-check":
        report = hv_check(instances=args.instances, samples=args.samples, seed=args.seed, sampler=args.sampler)
    elif args.check == "grad-check":
        env = make_environment(load_harness_config(args.config).environment) if args.config else None
        report = grad_check(env, seed=args.seed)
    elif args.check == "lemma-check":
        if not args.run:
            raise ConfigError("lemma-check needs a run directory (--run)")
        report = lemma_check(load_run(args.run))
    else:
        report = front_enum(_oracle_environment(args.config))
    print(report.render())
    if not report.passed:
        raise OracleFailure(f"{report.name} failed")
    return 0


# --- 5. Parser ---
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="app.py", description="Multi-objective RL with dynamic reward weighting")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train the configured arms")
    run.add_argument("--config", required=True)
    run.add_argument("--arm", action="append", help="only run this arm (repeatable)")
    run.add_argument("--seed", type=int, help="run a single seed instead of the harness seeds")
    run.add_argument("--out", help="output root (default: $MORL_OUTPUT_ROOT or runs)")
    run.add_argument("--parallel", type=int, help="concurrent runs")
    run.add_argument("--override", action="append", metavar="SECTION.KEY=VALUE")
    run.set_defaults(func=cmd_run)

    compare = sub.add_parser("compare", help="compare the final fronts of completed runs")
    compare.add_argument("runs", nargs="+")
    compare.add_argument("--out")
    compare.set_defaults(func=cmd_compare)

    oracle = sub.add_parser("oracle", help="brute-force verification")
    oracle.add_argument("check", choices=["hv-check", "grad-check", "lemma-check", "front-enum"])
    oracle.add_argument("--config")
    oracle.add_argument("--run")
    oracle.add_argument("--seed", type=int, default=0)
    oracle.add_argument("--instances", type=int, default=100)
    oracle.add_argument("--samples", type=int, default=1_000_000)
    oracle.add_argument("--sampler", choices=("sobol", "uniform"), default="sobol")
    oracle.set_defaults(func=cmd_oracle)

    export = sub.add_parser("export", help="plot-ready CSVs from a run")
    export.add_argument("run")
    export.add_argument("--what", required=True, choices=EXPORTS)
    export.add_argument("--against", help="second run for the kl export")
    export.add_argument("--out")
    export.set_defaults(func=cmd_export)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        return args.func(args)
    except MorlError as exc:
        print(f"error: {exc.detail}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
