"""Multi-seed train-evaluate-compare campaigns.

A campaign trains one PPO bundle per training seed, evaluates each on the
shared evaluation episodes, evaluates the LP agent on the same episodes,
optionally computes the perfect-information bound of every episode, and
writes everything under ``<out>/<scenario>/``::

    checkpoints/ppo_seed<k>.pt     best bundle of each seed
    curves/curve_seed<k>.csv       learning curve of each seed
    evaluation.csv                 per-episode costs of every agent
    bounds.csv                     per-episode perfect-information bounds
    comparison.csv                 bound / LP / PPO summary with CIs
    trace.csv                      per-step material aggregates
    campaign.toml                  the spec the campaign ran with
"""

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import pandas as pd
import tomli_w
from loguru import logger

from supplywise.agents.ppo import PpoAgent, PpoHyperparams
from supplywise.agents.training import (
    CURVE_SCHEMA,
    DEFAULT_EVAL_EPISODES,
    DEFAULT_EVAL_EVERY,
    curve_frame,
    train,
)
from supplywise.core.chain import ScenarioSpec, load_scenario
from supplywise.core.stochastic import EpisodeRealization
from supplywise.evaluation.evaluator import (
    EVALUATION_SCHEMA,
    STEP_TRACE_SCHEMA,
    EvalPlan,
    EvalReport,
    evaluate_agent,
)
from supplywise.evaluation.statistics import (
    BOUNDS_SCHEMA,
    COMPARISON_SCHEMA,
    bounds_frame,
    compare_report,
)
from supplywise.exceptions import (
    ConfigurationError,
    NonOptimalSolutionError,
    TrainingDivergenceError,
)
from supplywise.planning.lp_agent import (
    LpAgent,
    extract_lp_agent,
    perfect_information_bound,
    solve_forecast,
)
from supplywise.utils.io import atomic_write, write_csv

# Fixed training seeds of the full-scale campaign.
DEFAULT_TRAINING_SEEDS = (101, 202, 303, 404, 505)

FULL_STEPS = 7_200_000
DESK_STEPS = 500_000


@dataclass(frozen=True)
class CampaignSpec:
    """What a campaign trains and evaluates.

    Attributes:
        scenario: Catalog name or path of a scenario file.
        training_seeds: One PPO model is trained per seed.
        total_steps: Environment steps per training run.
        eval_every: Training-time evaluation cadence in environment steps.
        eval_episodes: Held-out episodes per training-time evaluation.
        eval_plan: Final evaluation episodes shared by all agents.
        hyperparams: PPO settings.
        compute_bounds: Solve the perfect-information LP of every episode.
        factory_cut_units: Factory cut denomination for the action codec.
    """

    scenario: str = "N20"
    training_seeds: Tuple[int, ...] = DEFAULT_TRAINING_SEEDS
    total_steps: int = FULL_STEPS
    eval_every: int = DEFAULT_EVAL_EVERY
    eval_episodes: int = DEFAULT_EVAL_EPISODES
    eval_plan: EvalPlan = field(default_factory=EvalPlan)
    hyperparams: PpoHyperparams = field(default_factory=PpoHyperparams)
    compute_bounds: bool = True
    factory_cut_units: str = "raw"

    @classmethod
    def full(cls, scenario: str = "N20") -> CampaignSpec:
        """Full scale: five seeds of 7.2 million steps each."""
        return cls(scenario=scenario)

    @classmethod
    def desk(cls, scenario: str = "N20") -> CampaignSpec:
        """Workstation scale: one seed of 500 thousand steps."""
        return cls(
            scenario=scenario,
            training_seeds=DEFAULT_TRAINING_SEEDS[:1],
            total_steps=DESK_STEPS,
        )

    @classmethod
    def preset(cls, name: str, scenario: str = "N20") -> CampaignSpec:
        presets = {"full": cls.full, "desk": cls.desk}
        if name not in presets:
            raise ValueError(f"Invalid preset '{name}'. Must be one of {tuple(presets)}")
        return presets[name](scenario)

    def violations(self) -> List[str]:
        problems = []
        if not self.training_seeds:
            problems.append("at least one training seed is required")
        if len(set(self.training_seeds)) != len(self.training_seeds):
            problems.append("training seeds must be distinct")
        if self.total_steps < 1 or self.eval_every < 1 or self.eval_episodes < 1:
            problems.append("step and episode counts must be positive")
        problems += self.eval_plan.violations()
        problems += self.hyperparams.violations()
        return problems

    def validate(self) -> CampaignSpec:
        problems = self.violations()
        if problems:
            raise ConfigurationError("Invalid campaign: " + "; ".join(problems), problems)
        return self

    def with_overrides(self, **changes: Any) -> CampaignSpec:
        """Copy with the given fields replaced; None values are ignored."""
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "training_seeds": list(self.training_seeds),
            "total_steps": self.total_steps,
            "eval_every": self.eval_every,
            "eval_episodes": self.eval_episodes,
            "eval_plan": self.eval_plan.to_dict(),
            "hyperparams": self.hyperparams.to_dict(),
            "compute_bounds": self.compute_bounds,
            "factory_cut_units": self.factory_cut_units,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> CampaignSpec:
        values = dict(data)
        if "training_seeds" in values:
            values["training_seeds"] = tuple(int(s) for s in values["training_seeds"])
        if "eval_plan" in values:
            plan = values["eval_plan"]
            values["eval_plan"] = EvalPlan(tuple(plan["seeds"]), int(plan["episodes_per_seed"]))
        if "hyperparams" in values:
            values["hyperparams"] = PpoHyperparams.from_dict(values["hyperparams"])
        return cls(**values)

    def save(self, output_path: Union[str, Path]) -> None:
        with atomic_write(output_path, "wb") as f:
            tomli_w.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path: Union[str, Path]) -> CampaignSpec:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Campaign file not found: {path}")
        with open(path, "rb") as f:
            return cls.from_dict(tomllib.load(f))


@dataclass
class CampaignRecord:
    """Everything a campaign produced.

    Attributes:
        scenario: Scenario the campaign ran on.
        spec: Campaign settings.
        out_dir: Directory holding the outputs.
        reports: Evaluation report per agent ('lp', 'ppo').
        bounds: Perfect-information bound per episode_id.
        failures: Error message per training seed that failed.
        comparison: Comparison table, when both agents were evaluated.
        files: Written output files by kind.
    """

    scenario: ScenarioSpec
    spec: CampaignSpec
    out_dir: Path
    reports: Dict[str, EvalReport] = field(default_factory=dict)
    bounds: Dict[str, float] = field(default_factory=dict)
    failures: Dict[int, str] = field(default_factory=dict)
    comparison: Optional[pd.DataFrame] = None
    files: Dict[str, Path] = field(default_factory=dict)


def episode_bounds(scenario: ScenarioSpec, plan: EvalPlan) -> Dict[str, float]:
    """Perfect-information bound of every episode of an evaluation plan."""
    logger.info(f"Solving {plan.num_episodes} perfect-information LPs for '{scenario.name}'")
    bounds = {}
    for episode_id, episode_seed in plan.episodes():
        realization = EpisodeRealization.sample(scenario, episode_seed)
        bounds[episode_id] = perfect_information_bound(scenario, realization)
    return bounds


def _train_seeds(
    spec: CampaignSpec, scenario: ScenarioSpec, out: Path, record: CampaignRecord
) -> List[EvalReport]:
    reports = []
    for k, seed in enumerate(spec.training_seeds, start=1):
        logger.info(f"Seed {seed} ({k}/{len(spec.training_seeds)})")
        checkpoint = out / "checkpoints" / f"ppo_seed{seed}.pt"
        try:
            result = train(
                scenario,
                seed=seed,
                total_steps=spec.total_steps,
                eval_every=spec.eval_every,
                eval_episodes=spec.eval_episodes,
                hyperparams=spec.hyperparams,
                checkpoint_path=checkpoint,
                factory_cut_units=spec.factory_cut_units,
            )
        except TrainingDivergenceError as e:
            logger.warning(f"Training failed for seed {seed}: {e}")
            record.failures[seed] = str(e)
            if e.curve:
                path = out / "curves" / f"curve_seed{seed}.csv"
                record.files[f"curve_seed{seed}"] = write_csv(
                    curve_frame(e.curve), path, CURVE_SCHEMA
                )
            continue
        record.files[f"checkpoint_seed{seed}"] = checkpoint
        record.files[f"curve_seed{seed}"] = result.save_curve(
            out / "curves" / f"curve_seed{seed}.csv"
        )
        agent = PpoAgent(result.best, factory_cut_units=spec.factory_cut_units)
        reports.append(evaluate_agent(agent, scenario, spec.eval_plan, model=f"seed{seed}"))
    return reports


def run_campaign(
    spec: CampaignSpec,
    out_dir: Union[str, Path] = "results",
    train_ppo: bool = True,
) -> CampaignRecord:
    """Train, evaluate and compare agents on one scenario.

    Args:
        spec: Campaign settings.
        out_dir: Root output directory.
        train_ppo: Set to False to evaluate only the LP agent and bounds.

    Returns:
        CampaignRecord with reports, bounds, failures and written files.

    Raises:
        ConfigurationError: If the spec is invalid.
        NonOptimalSolutionError: If the forecast LP is not optimal.
    """
    spec.validate()
    scenario = load_scenario(spec.scenario)
    out = Path(out_dir) / scenario.name
    record = CampaignRecord(scenario=scenario, spec=spec, out_dir=out)
    spec.save(out / "campaign.toml")
    logger.info(
        f"Campaign on '{scenario.name}': {len(spec.training_seeds)} seeds x "
        f"{spec.total_steps:,} steps, {spec.eval_plan.num_episodes} evaluation episodes"
    )

    solution = solve_forecast(scenario)
    if not solution.optimal:
        raise NonOptimalSolutionError(f"Forecast LP for '{scenario.name}' is {solution.status}")
    lp_agent = LpAgent(extract_lp_agent(solution), factory_cut_units=spec.factory_cut_units)
    record.reports["lp"] = evaluate_agent(lp_agent, scenario, spec.eval_plan, model="forecast")

    if train_ppo:
        ppo_reports = _train_seeds(spec, scenario, out, record)
        if ppo_reports:
            record.reports["ppo"] = EvalReport.pool(ppo_reports, agent="ppo")

    if spec.compute_bounds:
        record.bounds = episode_bounds(scenario, spec.eval_plan)
        record.files["bounds"] = write_csv(
            bounds_frame(record.bounds), out / "bounds.csv", BOUNDS_SCHEMA
        )

    reports = list(record.reports.values())
    record.files["evaluation"] = write_csv(
        pd.concat([r.to_frame() for r in reports], ignore_index=True),
        out / "evaluation.csv",
        EVALUATION_SCHEMA,
    )
    record.files["trace"] = write_csv(
        pd.concat([r.trace_frame() for r in reports], ignore_index=True),
        out / "trace.csv",
        STEP_TRACE_SCHEMA,
    )
    if "ppo" in record.reports:
        record.comparison = compare_report(record.reports, record.bounds or None)
        record.files["comparison"] = write_csv(
            record.comparison, out / "comparison.csv", COMPARISON_SCHEMA
        )

    if record.failures:
        logger.warning(f"{len(record.failures)} training seed(s) failed: {sorted(record.failures)}")
    logger.success(f"Campaign outputs written to {out}")
    return record
