"""Evaluation of agents on a shared, fixed set of episodes.

Every agent of a scenario plays exactly the same episodes: episode seeds
are derived from a fixed list of evaluation seeds, and each report keeps
the digest of every episode's demand and lead-time realization so that
comparisons can verify they really saw the same episodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from supplywise.core.chain import ScenarioSpec
from supplywise.core.environment import Agent, SupplyChainEnv
from supplywise.core.simulator import COST_TYPES
from supplywise.core.stochastic import Purpose, derive_seed
from supplywise.exceptions import ConfigurationError, ContractViolationError, EpisodeMismatchError
from supplywise.utils.io import read_csv, write_csv

EVALUATION_SCHEMA = "supplywise-evaluation v1"
STEP_TRACE_SCHEMA = "supplywise-step-trace v1"

# Fixed evaluation seeds; reports are only comparable when they share these.
DEFAULT_EVAL_SEEDS = (1009, 2017, 3041, 4057, 5081, 6101, 7121, 8147, 9173, 10193)

TRACE_QUANTITIES = ("stock", "production", "transport", "unmet", "demand")


@dataclass(frozen=True)
class EvalPlan:
    """Which episodes an evaluation runs.

    Attributes:
        seeds: Evaluation seeds.
        episodes_per_seed: Episodes derived from each seed.
    """

    seeds: Tuple[int, ...] = DEFAULT_EVAL_SEEDS
    episodes_per_seed: int = 10

    def violations(self) -> List[str]:
        problems = []
        if not self.seeds:
            problems.append("at least one evaluation seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            problems.append("evaluation seeds must be distinct")
        if self.episodes_per_seed < 1:
            problems.append("episodes_per_seed must be positive")
        return problems

    def validate(self) -> EvalPlan:
        problems = self.violations()
        if problems:
            raise ConfigurationError("Invalid evaluation plan: " + "; ".join(problems), problems)
        return self

    @property
    def num_episodes(self) -> int:
        return len(self.seeds) * self.episodes_per_seed

    def episodes(self) -> List[Tuple[str, int]]:
        """(episode_id, episode seed) pairs in evaluation order."""
        return [
            (f"{seed}-{i}", derive_seed(seed, Purpose.EVALUATION_EPISODE, i))
            for seed in self.seeds
            for i in range(self.episodes_per_seed)
        ]

    def to_dict(self) -> Dict[str, object]:
        return {"seeds": list(self.seeds), "episodes_per_seed": self.episodes_per_seed}


@dataclass
class EpisodeResult:
    """Totals and per-step aggregates of one evaluated episode."""

    episode_id: str
    total_cost: float
    breakdown: Dict[str, float]
    digest: str
    steps: Dict[str, np.ndarray]


def run_episode(agent: Agent, env: SupplyChainEnv, episode_id: str, seed: int) -> EpisodeResult:
    """Play one episode and collect its costs and per-step material totals."""
    obs = env.reset(seed)
    agent.begin_episode()
    h = env.scenario.chain.horizon
    steps = {q: np.zeros(h) for q in TRACE_QUANTITIES}
    breakdown = {c: 0.0 for c in COST_TYPES}
    done = False
    while not done:
        obs, _, done, info = agent.act(env, obs)
        outcome = info["outcome"]
        t = outcome.t - 1
        steps["stock"][t] = outcome.stocks.sum()
        steps["production"][t] = outcome.produced.sum()
        steps["transport"][t] = outcome.shipped.sum()
        steps["unmet"][t] = outcome.unmet_units.sum()
        steps["demand"][t] = outcome.demand.sum()
        for c in COST_TYPES:
            breakdown[c] += outcome.cost_breakdown[c]
    return EpisodeResult(
        episode_id=episode_id,
        total_cost=sum(breakdown.values()),
        breakdown=breakdown,
        digest=env.realization.digest(),
        steps=steps,
    )


@dataclass
class EvalReport:
    """Per-episode results of one agent.

    Attributes:
        agent: Agent identifier ('lp', 'ppo', ...).
        scenario: Scenario name.
        episode_ids: Episode identifiers in evaluation order.
        models: Model label per episode (pooled reports hold several).
        totals: Total cost per episode.
        breakdowns: (episodes, cost types) costs in COST_TYPES order.
        digests: Realization digest per episode.
        steps: Per quantity, an (episodes, h) array of per-step totals.
    """

    agent: str
    scenario: str
    episode_ids: List[str]
    models: List[str]
    totals: np.ndarray
    breakdowns: np.ndarray
    digests: List[str]
    steps: Dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.totals)

    @property
    def mean(self) -> float:
        return float(np.mean(self.totals))

    @property
    def std(self) -> float:
        return float(np.std(self.totals))

    def breakdown_means(self) -> Dict[str, float]:
        means = self.breakdowns.mean(axis=0)
        return {c: float(means[i]) for i, c in enumerate(COST_TYPES)}

    def episode_set(self) -> set:
        """Distinct (episode_id, digest) pairs covered by the report."""
        return set(zip(self.episode_ids, self.digests))

    @classmethod
    def from_results(
        cls, agent: str, scenario: str, results: Sequence[EpisodeResult], model: str = ""
    ) -> EvalReport:
        return cls(
            agent=agent,
            scenario=scenario,
            episode_ids=[r.episode_id for r in results],
            models=[model] * len(results),
            totals=np.array([r.total_cost for r in results]),
            breakdowns=np.array([[r.breakdown[c] for c in COST_TYPES] for r in results]),
            digests=[r.digest for r in results],
            steps={q: np.stack([r.steps[q] for r in results]) for q in TRACE_QUANTITIES},
        )

    @classmethod
    def pool(cls, reports: Sequence[EvalReport], agent: Optional[str] = None) -> EvalReport:
        """Concatenate reports of several models of the same agent and scenario."""
        if not reports:
            raise ValueError("Cannot pool an empty list of reports")
        scenarios = {r.scenario for r in reports}
        if len(scenarios) > 1:
            raise EpisodeMismatchError(f"Cannot pool reports of different scenarios: {scenarios}")
        return cls(
            agent=agent or reports[0].agent,
            scenario=reports[0].scenario,
            episode_ids=[e for r in reports for e in r.episode_ids],
            models=[m for r in reports for m in r.models],
            totals=np.concatenate([r.totals for r in reports]),
            breakdowns=np.concatenate([r.breakdowns for r in reports]),
            digests=[d for r in reports for d in r.digests],
            steps={q: np.concatenate([r.steps[q] for r in reports]) for q in TRACE_QUANTITIES},
        )

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, scenario: str) -> EvalReport:
        """Rebuild a report from rows of one agent written by :meth:`to_frame`.

        Realization digests and per-step aggregates are not part of the CSV,
        so reports read back compare episodes by id only.
        """
        agents = frame["agent"].unique()
        if len(agents) != 1:
            raise ValueError(f"Expected rows of a single agent, got {list(agents)}")
        return cls(
            agent=str(agents[0]),
            scenario=scenario,
            episode_ids=[str(e) for e in frame["episode_id"]],
            models=["" if pd.isna(m) else str(m) for m in frame["model"]],
            totals=frame["total_cost"].to_numpy(dtype=float),
            breakdowns=frame[list(COST_TYPES)].to_numpy(dtype=float),
            digests=[""] * len(frame),
        )

    def to_frame(self) -> pd.DataFrame:
        """One row per episode: episode_id, agent, model, total_cost, then costs by type."""
        frame = pd.DataFrame(
            {
                "episode_id": self.episode_ids,
                "agent": self.agent,
                "model": self.models,
                "total_cost": self.totals,
            }
        )
        for i, c in enumerate(COST_TYPES):
            frame[c] = self.breakdowns[:, i]
        return frame

    def trace_frame(self) -> pd.DataFrame:
        """Mean and std across episodes of each per-step quantity."""
        rows = []
        for q in TRACE_QUANTITIES:
            values = self.steps[q]
            means, stds = values.mean(axis=0), values.std(axis=0)
            for t in range(values.shape[1]):
                rows.append(
                    {
                        "agent": self.agent,
                        "step": t + 1,
                        "quantity": q,
                        "mean": means[t],
                        "std": stds[t],
                    }
                )
        return pd.DataFrame(rows, columns=["agent", "step", "quantity", "mean", "std"])

    def save(self, output_path: Union[str, Path]) -> Path:
        return write_csv(self.to_frame(), output_path, EVALUATION_SCHEMA)

    def save_trace(self, output_path: Union[str, Path]) -> Path:
        return write_csv(self.trace_frame(), output_path, STEP_TRACE_SCHEMA)


def _check_compatible(agent: Agent, env: SupplyChainEnv) -> None:
    bundle = getattr(agent, "bundle", None)
    if bundle is not None:
        model = bundle.model
        if (model.observation_size, model.action_size) != (env.observation_size, env.action_size):
            raise ContractViolationError(
                f"Agent '{agent.name}' expects {model.observation_size} observations and "
                f"{model.action_size} actions; scenario '{env.scenario.name}' has "
                f"{env.observation_size} and {env.action_size}"
            )
    plan = getattr(agent, "plan", None)
    if plan is not None and plan.chain != env.scenario.chain:
        raise ContractViolationError(
            f"Agent '{agent.name}' was planned for a different chain than '{env.scenario.name}'"
        )


def evaluate_agent(
    agent: Agent,
    scenario: ScenarioSpec,
    plan: Optional[EvalPlan] = None,
    model: str = "",
) -> EvalReport:
    """Run an agent on every episode of an evaluation plan.

    Args:
        agent: PPO or LP agent (anything following the Agent protocol).
        scenario: Scenario to evaluate on.
        plan: Episodes to run; defaults to the fixed evaluation seeds.
        model: Label stored with every episode (e.g. the training seed).

    Returns:
        EvalReport with one entry per episode.

    Raises:
        ContractViolationError: If the agent does not fit the scenario.
    """
    plan = (plan or EvalPlan()).validate()
    env = SupplyChainEnv(scenario, getattr(agent, "factory_cut_units", "raw"))
    _check_compatible(agent, env)
    logger.info(f"Evaluating '{agent.name}' on '{scenario.name}' ({plan.num_episodes} episodes)")
    results = [run_episode(agent, env, eid, seed) for eid, seed in plan.episodes()]
    report = EvalReport.from_results(agent.name, scenario.name, results, model)
    logger.success(f"'{agent.name}': mean cost {report.mean:,.0f} (std {report.std:,.0f})")
    return report


def read_reports(path: Union[str, Path], scenario: str) -> Dict[str, EvalReport]:
    """Read an evaluation CSV back into one report per agent."""
    frame = read_csv(path, EVALUATION_SCHEMA)
    frame["episode_id"] = frame["episode_id"].astype(str)
    return {
        str(agent): EvalReport.from_frame(rows, scenario)
        for agent, rows in frame.groupby("agent", sort=False)
    }
