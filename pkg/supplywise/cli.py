"""Command-line interface for SupplyWise.

Every subcommand writes its outputs under ``--out`` (default ``results``
or ``$SUPPLYWISE_OUT_DIR``), in a directory named after the scenario.

Example:
    Command line usage::

        $ supplywise scenario list
        $ supplywise lp solve --scenario N20
        $ supplywise train --scenario rN0cl --seed 101 --steps 500000
        $ supplywise campaign --scenario N20 --preset desk
        $ supplywise report --scenario N20
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional

import tomli_w
from loguru import logger

from supplywise.core.chain import list_scenarios, load_scenario
from supplywise.core.stochastic import demand_trace
from supplywise.evaluation.evaluator import (
    DEFAULT_EVAL_SEEDS,
    EvalPlan,
    EvalReport,
    evaluate_agent,
    read_reports,
)
from supplywise.evaluation.statistics import BOUNDS_SCHEMA, COMPARISON_SCHEMA, compare_report
from supplywise.exceptions import SupplyWiseError
from supplywise.planning.lp_agent import LpAgent, extract_lp_agent, solve_forecast
from supplywise.planning.lp_model import build_lp, forecast_scenario, write_lp_file
from supplywise.utils.io import read_csv, write_csv

DEMAND_TRACE_SCHEMA = "supplywise-demand-trace v1"

COMMANDS = (
    "scenario",
    "demand-trace",
    "lp",
    "train",
    "evaluate",
    "tune",
    "report",
    "campaign",
    "version",
    "help",
)


def _load_env() -> None:
    try:
        from dotenv import load_dotenv
    except ImportError:
        return
    load_dotenv()


def _configure_logging(level: str) -> None:
    logger.remove()
    logger.add(sys.stderr, level=level.upper())


def _seeds(text: Optional[str]) -> Optional[tuple]:
    if text is None:
        return None
    return tuple(int(s) for s in text.split(",") if s.strip())


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subparser per command."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default="N20", help="Catalog name or scenario TOML file")
    common.add_argument(
        "--out",
        type=Path,
        default=Path(os.environ.get("SUPPLYWISE_OUT_DIR", "results")),
        help="Output root directory",
    )
    common.add_argument(
        "--log-level",
        default=os.environ.get("SUPPLYWISE_LOG_LEVEL", "INFO"),
        help="loguru level (DEBUG, INFO, WARNING, ...)",
    )
    common.add_argument(
        "--factory-cut-units",
        choices=("raw", "product"),
        default="raw",
        help="Unit of the factory shipment cuts",
    )

    parser = argparse.ArgumentParser(prog="supplywise", add_help=False)
    sub = parser.add_subparsers(dest="command")

    scenario = sub.add_parser("scenario", parents=[common])
    scenario.add_argument("action", choices=("list", "dump"))
    scenario.add_argument("--file", type=Path, help="Write the dump here instead of stdout")

    trace = sub.add_parser("demand-trace", parents=[common])
    trace.add_argument("--seed", type=int, default=DEFAULT_EVAL_SEEDS[0])

    lp = sub.add_parser("lp", parents=[common])
    lp.add_argument("action", choices=("solve", "plan", "bounds", "export"))
    lp.add_argument("--seeds", help="Comma-separated evaluation seeds for 'bounds'")
    lp.add_argument("--episodes", type=int, default=10, help="Episodes per seed for 'bounds'")

    train = sub.add_parser("train", parents=[common])
    train.add_argument("--seed", type=int, default=101)
    train.add_argument("--steps", type=int, default=500_000)
    train.add_argument("--eval-every", type=int)
    train.add_argument("--eval-episodes", type=int)

    evaluate = sub.add_parser("evaluate", parents=[common])
    evaluate.add_argument("--agent", choices=("lp", "ppo"), default="lp")
    evaluate.add_argument("--checkpoint", type=Path, nargs="*", default=[])
    evaluate.add_argument("--seeds", help="Comma-separated evaluation seeds")
    evaluate.add_argument("--episodes", type=int, default=10)

    tune = sub.add_parser("tune", parents=[common])
    tune.add_argument("--trials", type=int, default=100)
    tune.add_argument("--steps", type=int, default=200_000, help="Training steps per trial")
    tune.add_argument("--seed", type=int, default=0)

    sub.add_parser("report", parents=[common])

    campaign = sub.add_parser("campaign", parents=[common])
    campaign.add_argument("--preset", choices=("desk", "full"), default="desk")
    campaign.add_argument("--seeds", help="Comma-separated training seeds")
    campaign.add_argument("--steps", type=int, help="Training steps per seed")
    campaign.add_argument("--no-bounds", action="store_true")
    campaign.add_argument("--lp-only", action="store_true")

    return parser


def cmd_scenario(args: argparse.Namespace) -> None:
    if args.action == "list":
        for name in list_scenarios():
            print(name)
        return
    spec = load_scenario(args.scenario)
    if args.file is not None:
        spec.save(args.file)
        logger.success(f"Scenario '{spec.name}' written to {args.file}")
    else:
        print(tomli_w.dumps(spec.to_dict()))


def cmd_demand_trace(args: argparse.Namespace) -> None:
    spec = load_scenario(args.scenario)
    path = args.out / spec.name / f"demand_seed{args.seed}.csv"
    write_csv(demand_trace(spec, args.seed), path, DEMAND_TRACE_SCHEMA)
    logger.success(f"Demand trace written to {path}")


def cmd_lp(args: argparse.Namespace) -> None:
    spec = load_scenario(args.scenario)
    out = args.out / spec.name
    if args.action == "export":
        path = write_lp_file(build_lp(spec, forecast_scenario(spec)), out / "forecast.lp")
        logger.success(f"LP written to {path}")
        return
    if args.action == "bounds":
        from supplywise.evaluation.campaign import episode_bounds
        from supplywise.evaluation.statistics import bounds_frame

        plan = EvalPlan(_seeds(args.seeds) or DEFAULT_EVAL_SEEDS, args.episodes).validate()
        bounds = bounds_frame(episode_bounds(spec, plan))
        path = write_csv(bounds, out / "bounds.csv", BOUNDS_SCHEMA)
        logger.success(f"Bounds written to {path}")
        return

    solution = solve_forecast(spec)
    print(f"status: {solution.status}")
    print(f"objective: {solution.objective:,.2f}")
    if args.action == "plan":
        path = extract_lp_agent(solution).save(out / "lp_plan.csv")
        logger.success(f"Plan written to {path}")


def cmd_train(args: argparse.Namespace) -> None:
    from supplywise.agents.training import DEFAULT_EVAL_EPISODES, DEFAULT_EVAL_EVERY, train

    spec = load_scenario(args.scenario)
    out = args.out / spec.name
    checkpoint = out / "checkpoints" / f"ppo_seed{args.seed}.pt"
    result = train(
        spec,
        seed=args.seed,
        total_steps=args.steps,
        eval_every=args.eval_every or DEFAULT_EVAL_EVERY,
        eval_episodes=args.eval_episodes or DEFAULT_EVAL_EPISODES,
        checkpoint_path=checkpoint,
        factory_cut_units=args.factory_cut_units,
    )
    curve = result.save_curve(out / "curves" / f"curve_seed{args.seed}.csv")
    logger.success(f"Checkpoint: {checkpoint}, learning curve: {curve}")


def cmd_evaluate(args: argparse.Namespace) -> None:
    spec = load_scenario(args.scenario)
    out = args.out / spec.name
    plan = EvalPlan(_seeds(args.seeds) or DEFAULT_EVAL_SEEDS, args.episodes).validate()

    if args.agent == "lp":
        solution = solve_forecast(spec)
        agent = LpAgent(extract_lp_agent(solution), factory_cut_units=args.factory_cut_units)
        report = evaluate_agent(agent, spec, plan, model="forecast")
    else:
        from supplywise.agents.ppo import PolicyBundle, PpoAgent

        if not args.checkpoint:
            raise SupplyWiseError("evaluate --agent ppo needs at least one --checkpoint")
        reports = []
        for path in args.checkpoint:
            agent = PpoAgent(PolicyBundle.load(path), factory_cut_units=args.factory_cut_units)
            reports.append(evaluate_agent(agent, spec, plan, model=Path(path).stem))
        report = EvalReport.pool(reports, agent="ppo")

    path = report.save(out / f"evaluation_{report.agent}.csv")
    report.save_trace(out / f"trace_{report.agent}.csv")
    print(f"{report.agent}: mean {report.mean:,.0f}, std {report.std:,.0f}, {len(report)} episodes")
    logger.success(f"Evaluation written to {path}")


def cmd_tune(args: argparse.Namespace) -> None:
    from supplywise.evaluation.tuning import random_search_tune

    spec = load_scenario(args.scenario)
    result = random_search_tune(
        spec, trials=args.trials, steps_per_trial=args.steps, seed=args.seed
    )
    path = result.save(args.out / spec.name / "tuning.csv")
    print(tomli_w.dumps(result.best_hyperparams.to_dict()))
    logger.success(f"Tuning trials written to {path}")


def _collect_reports(out: Path, scenario: str) -> dict:
    reports: dict = {}
    combined = out / "evaluation.csv"
    if combined.exists():
        reports.update(read_reports(combined, scenario))
    for agent in ("lp", "ppo"):
        path = out / f"evaluation_{agent}.csv"
        if path.exists():
            reports.update(read_reports(path, scenario))
    return reports


def cmd_report(args: argparse.Namespace) -> None:
    spec = load_scenario(args.scenario)
    out = args.out / spec.name
    reports = _collect_reports(out, spec.name)
    missing = [a for a in ("lp", "ppo") if a not in reports]
    if missing:
        raise SupplyWiseError(f"No {' or '.join(missing)} evaluation found under {out}")
    bounds = None
    if (out / "bounds.csv").exists():
        frame = read_csv(out / "bounds.csv", BOUNDS_SCHEMA)
        bounds = dict(zip(frame["episode_id"].astype(str), frame["bound"].astype(float)))
    comparison = compare_report(reports, bounds)
    path = write_csv(comparison, out / "comparison.csv", COMPARISON_SCHEMA)
    print(comparison.to_string(index=False))
    logger.success(f"Comparison written to {path}")


def cmd_campaign(args: argparse.Namespace) -> None:
    from supplywise.evaluation.campaign import CampaignSpec, run_campaign

    spec = CampaignSpec.preset(args.preset, args.scenario).with_overrides(
        training_seeds=_seeds(args.seeds),
        total_steps=args.steps,
        factory_cut_units=args.factory_cut_units,
    )
    if args.no_bounds:
        spec = spec.with_overrides(compute_bounds=False)
    record = run_campaign(spec, args.out, train_ppo=not args.lp_only)
    if record.comparison is not None:
        print(record.comparison.to_string(index=False))
    if record.failures:
        raise SupplyWiseError(f"Training failed for seeds {sorted(record.failures)}")


HANDLERS = {
    "scenario": cmd_scenario,
    "demand-trace": cmd_demand_trace,
    "lp": cmd_lp,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "tune": cmd_tune,
    "report": cmd_report,
    "campaign": cmd_campaign,
}


def main(argv: Optional[List[str]] = None) -> None:
    """Main CLI entry point.

    Parses command-line arguments and dispatches to the matching handler.
    Library errors are logged and turned into exit status 1.

    Args:
        argv: Arguments without the program name; defaults to ``sys.argv[1:]``.
    """
    _load_env()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv or argv[0] in ("help", "-h", "--help"):
        print_usage()
        return
    if argv[0] == "version":
        from supplywise import __version__

        print(f"SupplyWise version {__version__}")
        return
    if argv[0] not in COMMANDS:
        logger.error(f"Unknown command: {argv[0]}")
        print_usage()
        sys.exit(1)

    args = build_parser().parse_args(argv)
    _configure_logging(args.log_level)
    logger.info("📦 SupplyWise - supply chain planning with LP and PPO")
    logger.info("=" * 50)

    try:
        HANDLERS[args.command](args)
    except (SupplyWiseError, FileNotFoundError) as e:
        logger.error(str(e))
        sys.exit(1)


def print_usage() -> None:
    """Print CLI usage information."""
    usage = """
Usage: supplywise <command> [options]

Commands:
    scenario list|dump     List catalog scenarios or print one as TOML
    demand-trace           Write the sampled demands of one episode
    lp solve|plan|bounds|export
                           Solve the forecast LP, save its plan, compute
                           perfect-information bounds, or export the LP
    train                  Train a PPO policy
    evaluate               Evaluate the LP agent or PPO checkpoints
    tune                   Random-search PPO hyperparameters
    report                 Compare LP and PPO evaluations with bootstrap CIs
    campaign               Train, evaluate and report in one run
    version                Show version information
    help                   Show this help message

Common options:
    --scenario NAME|FILE   Catalog name (default N20) or scenario TOML file
    --seed(s) N[,N...]     Seed or comma-separated seed list
    --steps N              Training steps
    --out DIR              Output root (default results or $SUPPLYWISE_OUT_DIR)
    --preset desk|full     Campaign scale
    --log-level LEVEL      Log level (default INFO or $SUPPLYWISE_LOG_LEVEL)

Quick Start:
    from supplywise import builtin_scenario, evaluate_agent, extract_lp_agent, LpAgent
    from supplywise.planning import solve_forecast

    scenario = builtin_scenario("N20")
    agent = LpAgent(extract_lp_agent(solve_forecast(scenario)))
    report = evaluate_agent(agent, scenario)
"""
    print(usage)


if __name__ == "__main__":
    main()
