"""Open-loop LP agent and perfect-information bounds.

The LP agent replays the production and shipment schedule of the forecast
plan. Quantities are fixed in advance, but each step's schedule is encoded
against the live state: when the realized stock falls short of the plan,
the node's shipments are scaled down proportionally to what is available.

The perfect-information bound solves the same LP after the fact with an
episode's realized demands and lead times. No policy can do better on that
episode.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from loguru import logger

from supplywise.core.chain import ChainConfig, ScenarioSpec
from supplywise.core.codec import NormalizedAction, encode_plan
from supplywise.core.environment import StepResult, SupplyChainEnv
from supplywise.core.simulator import RawAction, SupplyChainState
from supplywise.core.stochastic import EpisodeRealization
from supplywise.exceptions import NonOptimalSolutionError, SolverError
from supplywise.planning.lp_model import DeterministicScenario, LpSolution, build_lp, solve_lp
from supplywise.utils.io import write_csv

PLAN_SCHEMA = "supplywise-lp-plan v1"


@dataclass
class LpAgentPlan:
    """Dispatch-step indexed schedule extracted from an optimal LP solution.

    Attributes:
        production: (h + 1, suppliers) production started at each step.
        shipments: (h + 1, links) product units shipped at each step.
        stocks: (h + 1, nodes) stock trajectory the plan expects.
        objective: Objective value of the solution.
        chain: Chain the plan belongs to.
    """

    production: np.ndarray
    shipments: np.ndarray
    stocks: np.ndarray
    objective: float
    chain: ChainConfig

    @property
    def horizon(self) -> int:
        return self.production.shape[0] - 1

    def raw_action(self, t: int) -> RawAction:
        """Scheduled decision of step ``t`` with factory shipments in raw units."""
        ratio = np.array([self.chain.processing_ratio[src] for src, _ in self.chain.links])
        return RawAction(
            production=self.production[t].copy(),
            shipments=self.shipments[t] * ratio,
        )

    def to_frame(self) -> pd.DataFrame:
        """Long table with columns step, node, quantity, kind."""
        chain = self.chain
        rows = []
        for t in range(1, self.horizon + 1):
            for s in chain.suppliers:
                rows.append(
                    {
                        "step": t,
                        "node": chain.node_order[s],
                        "quantity": self.production[t, s],
                        "kind": "production",
                    }
                )
            for k, (src, dst) in enumerate(chain.links):
                rows.append(
                    {
                        "step": t,
                        "node": chain.node_order[src],
                        "quantity": self.shipments[t, k],
                        "kind": f"transport:{chain.node_order[dst]}",
                    }
                )
        return pd.DataFrame(rows, columns=["step", "node", "quantity", "kind"])

    def save(self, output_path: Union[str, Path]) -> Path:
        return write_csv(self.to_frame(), output_path, PLAN_SCHEMA)


def extract_lp_agent(solution: LpSolution) -> LpAgentPlan:
    """Turn an optimal solution into a per-step schedule.

    Production P[i, j, n] is started at step i - j and shipments
    T[i, j, n, m] leave at step i - j. Pinned initial material (started
    before the episode) is not part of the schedule.

    Args:
        solution: Optimal solution of an instance built by ``build_lp``.

    Returns:
        LpAgentPlan for the instance's scenario.

    Raises:
        NonOptimalSolutionError: If the solution is not optimal.
    """
    if not solution.optimal:
        raise NonOptimalSolutionError(f"Cannot extract a plan from a {solution.status} LP")
    scenario = solution.instance.scenario
    if scenario is None:
        raise NonOptimalSolutionError("Solution does not come from a planning instance")
    chain = scenario.chain
    h = chain.horizon

    production = np.zeros((h + 1, len(chain.suppliers)))
    for (i, j, n), value in solution.values("P").items():
        if i - j >= 1:
            production[i - j, n] += value
    shipments = np.zeros((h + 1, len(chain.links)))
    for (i, j, n, m), value in solution.values("T").items():
        if i - j >= 1:
            shipments[i - j, chain.link_index(n, m)] += value
    stocks = np.zeros((h + 1, chain.num_nodes))
    for (i, n), value in solution.values("S").items():
        stocks[i, n] = value

    # Solver noise can leave tiny negatives
    production = np.maximum(production, 0.0)
    shipments = np.maximum(shipments, 0.0)
    return LpAgentPlan(production, shipments, stocks, solution.objective, chain)


def solve_forecast(scenario: ScenarioSpec) -> LpSolution:
    """Build and solve the forecast LP of a scenario."""
    logger.info(f"Solving forecast LP for '{scenario.name}'")
    solution = solve_lp(build_lp(scenario, DeterministicScenario.forecast(scenario)))
    if solution.optimal:
        logger.success(f"Forecast LP optimal: {solution.objective:,.0f}")
    return solution


class LpAgent:
    """Replays an LP plan through the normalized action interface.

    Attributes:
        name: Agent identifier used in reports.
        plan: Schedule being replayed.
        truncated_steps: Steps of the current episode where shipments were
            scaled down to the available stock.
    """

    def __init__(
        self,
        plan: LpAgentPlan,
        name: str = "lp",
        factory_cut_units: str = "raw",
    ) -> None:
        self.plan = plan
        self.name = name
        self.factory_cut_units = factory_cut_units
        self.truncated_steps = 0

    def begin_episode(self) -> None:
        self.truncated_steps = 0

    def feasible_action(self, state: SupplyChainState) -> RawAction:
        """Scheduled decision of ``state.t`` scaled to what the state can execute."""
        chain = self.plan.chain
        action = self.plan.raw_action(state.t)
        caps = np.asarray(chain.production_cap, dtype=float)[: len(chain.suppliers)]
        production = np.minimum(action.production, caps)
        shipments = action.shipments.copy()
        truncated = False
        for n in chain.shipping_nodes:
            ks = list(chain.outgoing_links[n])
            total = shipments[ks].sum()
            limit = float(state.stocks[n])
            if chain.is_factory[n]:
                limit = min(limit, chain.processing_cap[n])
            if total > limit:
                shipments[ks] *= limit / total
                truncated = truncated or total - limit > 1e-6 * max(1.0, limit)
        if truncated:
            self.truncated_steps += 1
            logger.debug(f"LP agent truncated shipments at step {state.t}")
        return RawAction(production=production, shipments=shipments)

    def rule(self, state: SupplyChainState) -> NormalizedAction:
        action = self.feasible_action(state)
        return encode_plan(action, state, self.plan.chain, self.factory_cut_units)

    def act(self, env: SupplyChainEnv, obs: np.ndarray) -> StepResult:
        return env.step_planned(self.rule)


def perfect_information_bound(
    scenario: ScenarioSpec,
    realization: EpisodeRealization,
    solution_out: Optional[list] = None,
) -> float:
    """Optimal cost of an episode with its demands and lead times known in advance.

    Args:
        scenario: Scenario of the episode.
        realization: Realized demands and lead times.
        solution_out: When given, the LpSolution is appended to it.

    Returns:
        Lower bound on any agent's cost for that episode.

    Raises:
        SolverError: If the LP is not solved to optimality.
    """
    det = DeterministicScenario.from_realization(realization)
    solution = solve_lp(build_lp(scenario, det))
    if not solution.optimal:
        raise SolverError(
            f"Perfect-information LP for seed {realization.seed} is {solution.status}"
        )
    if solution_out is not None:
        solution_out.append(solution)
    logger.debug(f"Bound for seed {realization.seed}: {solution.objective:,.0f}")
    return solution.objective
