"""Discrete-time simulation of a capacitated multi-echelon supply chain.

Each step runs the same cycle:

1. advance the clock,
2. add material due this step to the stocks and discard anything above
   capacity,
3. let retailers serve customer demand from stock (shortfalls are lost),
4. execute the decision: start production and ship material downstream,
   each batch with its own sampled lead time,
5. charge holding cost on the remaining stock,
6. reveal the demands of the next step.

Steps 1-3 and 4-6 are exposed separately as :meth:`SupplyChainSimulator.receive`
and :meth:`SupplyChainSimulator.dispatch` so that a decision can be decoded
against the stock that is actually on hand after arrivals.

Quantities at factories: shipment entries of a :class:`RawAction` are raw
material consumed; ``consumed / processing_ratio`` product units enter the
transport pipeline. Production, processing and transport are charged when
dispatched; material loaded into the pipelines before the episode is free.

Example:
    Running an episode with a fixed decision::

        from supplywise.core.chain import builtin_scenario
        from supplywise.core.simulator import RawAction, SupplyChainSimulator

        sim = SupplyChainSimulator(builtin_scenario("N0cl"))
        obs = sim.reset(seed=1)
        action = RawAction.zeros(sim.chain)
        while not sim.done:
            obs, outcome = sim.step(action)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd
from loguru import logger

from supplywise.core.chain import ChainConfig, ScenarioSpec, validate_scenario
from supplywise.core.stochastic import EpisodeRealization
from supplywise.exceptions import ContractViolationError
from supplywise.utils.io import write_csv


COST_TYPES = ("production", "processing", "transport", "stock", "excess_penalty", "unmet_penalty")

# Relative slack accepted on action bounds before an action counts as infeasible.
FEASIBILITY_TOLERANCE = 1e-9

TRACE_SCHEMA = "supplywise-episode-trace v1"


@dataclass
class SupplyChainState:
    """Mutable state of a running episode.

    Pipelines are stored by offset: column ``k`` holds the units due at step
    ``t + 1 + k``, so every due step lies in ``(t, t + l_max]``.

    Attributes:
        t: Current step (0 before the first step).
        stocks: Per-node stock.
        production_pipeline: (suppliers, l_max) production in progress.
        transport_pipeline: (links, l_max) material in transit, in the
            destination's units.
        next_demands: Per-retailer demand of step t + 1.
        horizon: Episode length h.
    """

    t: int
    stocks: np.ndarray
    production_pipeline: np.ndarray
    transport_pipeline: np.ndarray
    next_demands: np.ndarray
    horizon: int

    def copy(self) -> SupplyChainState:
        return SupplyChainState(
            t=self.t,
            stocks=self.stocks.copy(),
            production_pipeline=self.production_pipeline.copy(),
            transport_pipeline=self.transport_pipeline.copy(),
            next_demands=self.next_demands.copy(),
            horizon=self.horizon,
        )

    def production_due(self, supplier: int) -> Dict[int, float]:
        """Map from due step to units for one supplier (non-zero entries only)."""
        row = self.production_pipeline[supplier]
        return {self.t + 1 + k: float(v) for k, v in enumerate(row) if v != 0}

    def transport_due(self, link: int) -> Dict[int, float]:
        """Map from due step to units for one link (non-zero entries only)."""
        row = self.transport_pipeline[link]
        return {self.t + 1 + k: float(v) for k, v in enumerate(row) if v != 0}


@dataclass(frozen=True)
class Observation:
    """Physical-unit observation.

    Layout: node stocks, then for every node the pair (units arriving at
    t + 1, units arriving later), then next-step retailer demands, then the
    remaining steps. 27 values for the standard eight-node chain.
    """

    values: np.ndarray
    num_nodes: int

    def __len__(self) -> int:
        return len(self.values)

    @property
    def stocks(self) -> np.ndarray:
        return self.values[: self.num_nodes]

    @property
    def arriving_next(self) -> np.ndarray:
        q = self.num_nodes
        return self.values[q : 3 * q : 2]

    @property
    def arriving_later(self) -> np.ndarray:
        q = self.num_nodes
        return self.values[q + 1 : 3 * q : 2]

    @property
    def demands(self) -> np.ndarray:
        return self.values[3 * self.num_nodes : -1]

    @property
    def remaining_steps(self) -> float:
        return float(self.values[-1])


@dataclass(frozen=True)
class RawAction:
    """Physical-unit decision: production per supplier and shipment per link.

    Attributes:
        production: Units to start producing at each supplier.
        shipments: Units leaving each link's source stock, in link order.
            For factory sources these are raw units consumed.
    """

    production: np.ndarray
    shipments: np.ndarray

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.production, self.shipments])

    @classmethod
    def from_array(cls, values: np.ndarray, config: ChainConfig) -> RawAction:
        values = np.asarray(values, dtype=float)
        n_sup = len(config.suppliers)
        expected = n_sup + len(config.links)
        if values.shape != (expected,):
            raise ContractViolationError(
                f"Action has shape {values.shape}, expected ({expected},)"
            )
        return cls(production=values[:n_sup].copy(), shipments=values[n_sup:].copy())

    @classmethod
    def zeros(cls, config: ChainConfig) -> RawAction:
        return cls(
            production=np.zeros(len(config.suppliers)),
            shipments=np.zeros(len(config.links)),
        )


@dataclass
class StepOutcome:
    """Everything that happened during one step.

    Attributes:
        reward: Negative total cost of the step.
        cost_breakdown: Total cost per type, keys in COST_TYPES order.
        unmet_units: Lost sales per retailer.
        discarded_units: Units discarded above capacity per node.
        done: True when the horizon has been reached.
        t: Step number the outcome belongs to.
        arrived: Units received per node.
        demand: Demand per retailer.
        met: Demand served per retailer.
        produced: Production started per supplier.
        consumed: Stock leaving each node through shipments.
        shipped: Units entering each link's pipeline.
        stocks: Per-node stock at the end of the step.
        node_costs: Cost per type and node.
    """

    reward: float
    cost_breakdown: Dict[str, float]
    unmet_units: np.ndarray
    discarded_units: np.ndarray
    done: bool
    t: int = 0
    arrived: np.ndarray = field(default_factory=lambda: np.zeros(0))
    demand: np.ndarray = field(default_factory=lambda: np.zeros(0))
    met: np.ndarray = field(default_factory=lambda: np.zeros(0))
    produced: np.ndarray = field(default_factory=lambda: np.zeros(0))
    consumed: np.ndarray = field(default_factory=lambda: np.zeros(0))
    shipped: np.ndarray = field(default_factory=lambda: np.zeros(0))
    stocks: np.ndarray = field(default_factory=lambda: np.zeros(0))
    node_costs: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def total_cost(self) -> float:
        return -self.reward


@dataclass
class _Received:
    stocks_before: np.ndarray
    arrived: np.ndarray
    discarded: np.ndarray
    demand: np.ndarray
    met: np.ndarray
    unmet: np.ndarray


def build_observation(state: SupplyChainState, config: ChainConfig) -> Observation:
    """Assemble the physical-unit observation of a state.

    Args:
        state: Current simulator state.
        config: Chain the state belongs to.

    Returns:
        Observation whose "arriving later" entries sum every due step after t + 1.

    Example:
        A supplier pipeline {t+1: 330, t+2: 60, t+3: 45} yields 330 and 105.
    """
    q = config.num_nodes
    n_sup = len(config.suppliers)
    arriving = np.zeros((q, 2))
    arriving[:n_sup, 0] = state.production_pipeline[:, 0]
    arriving[:n_sup, 1] = state.production_pipeline[:, 1:].sum(axis=1)
    destinations = np.fromiter((dst for _, dst in config.links), dtype=np.int64)
    np.add.at(arriving[:, 0], destinations, state.transport_pipeline[:, 0])
    np.add.at(arriving[:, 1], destinations, state.transport_pipeline[:, 1:].sum(axis=1))
    values = np.concatenate(
        [
            state.stocks,
            arriving.ravel(),
            state.next_demands,
            [float(state.horizon - state.t)],
        ]
    )
    return Observation(values=values, num_nodes=q)


class EpisodeTrace:
    """Per-step record of an episode, exportable as a long CSV table."""

    def __init__(self, config: ChainConfig) -> None:
        self.config = config
        self.outcomes: List[StepOutcome] = []

    def append(self, outcome: StepOutcome) -> None:
        self.outcomes.append(outcome)

    def __len__(self) -> int:
        return len(self.outcomes)

    def to_frame(self) -> pd.DataFrame:
        """One row per (step, node) with flows, per-node costs and the step reward."""
        config = self.config
        n_sup = len(config.suppliers)
        retailer_pos = {n: i for i, n in enumerate(config.retailers)}
        rows = []
        for out in self.outcomes:
            shipped = np.zeros(config.num_nodes)
            for k, (src, _) in enumerate(config.links):
                shipped[src] += out.shipped[k]
            for n, name in enumerate(config.node_order):
                r = retailer_pos.get(n)
                row = {
                    "step": out.t,
                    "node": name,
                    "stock": out.stocks[n],
                    "arrived": out.arrived[n],
                    "shipped": shipped[n],
                    "produced": out.produced[n] if n < n_sup else 0.0,
                    "demand": out.demand[r] if r is not None else 0.0,
                    "unmet": out.unmet_units[r] if r is not None else 0.0,
                    "discarded": out.discarded_units[n],
                }
                for cost_type in COST_TYPES:
                    row[cost_type] = out.node_costs[cost_type][n]
                row["reward"] = out.reward
                rows.append(row)
        columns = ["step", "node", "stock", "arrived", "shipped", "produced", "demand"]
        columns += ["unmet", "discarded"]
        return pd.DataFrame(rows, columns=columns + list(COST_TYPES) + ["reward"])

    def cost_breakdown(self) -> Dict[str, float]:
        return {c: float(sum(o.cost_breakdown[c] for o in self.outcomes)) for c in COST_TYPES}

    def save(self, output_path: Union[str, Path]) -> None:
        write_csv(self.to_frame(), output_path, TRACE_SCHEMA)


class SupplyChainSimulator:
    """Environment for one scenario; owns its state and random realization.

    Attributes:
        scenario: Scenario being simulated.
        chain: Shortcut to ``scenario.chain``.
        state: Current state (None before the first reset).
        realization: Random quantities of the current episode.
        trace: Per-step record of the current episode when ``record`` is set.
    """

    def __init__(self, scenario: ScenarioSpec, record: bool = False) -> None:
        """Bind the simulator to a scenario.

        Args:
            scenario: Scenario to simulate.
            record: Keep an :class:`EpisodeTrace` of every step.

        Raises:
            ConfigurationError: If the scenario fails validation.
        """
        validate_scenario(scenario).raise_if_invalid(f"scenario '{scenario.name}'")
        self.scenario = scenario
        self.chain = scenario.chain
        self.record = record
        chain = self.chain

        self._l_max = scenario.lead_time.maximum
        self._suppliers = np.array(chain.suppliers, dtype=np.int64)
        self._retailers = np.array(chain.retailers, dtype=np.int64)
        self._link_src = np.array([src for src, _ in chain.links], dtype=np.int64)
        self._link_dst = np.array([dst for _, dst in chain.links], dtype=np.int64)
        self._ratio = np.asarray(chain.processing_ratio, dtype=float)
        self._stock_cap = np.asarray(chain.stock_cap, dtype=float)
        self._production_cap = np.asarray(chain.production_cap, dtype=float)[self._suppliers]
        self._processing_cap = np.asarray(chain.processing_cap, dtype=float)
        self._is_factory = np.asarray(chain.is_factory, dtype=bool)
        self._stock_cost = np.asarray(chain.stock_cost, dtype=float)
        self._production_cost = np.asarray(chain.production_cost, dtype=float)
        self._processing_cost = np.asarray(chain.processing_cost, dtype=float)

        self.state: Optional[SupplyChainState] = None
        self.realization: Optional[EpisodeRealization] = None
        self.trace: Optional[EpisodeTrace] = None
        self._received: Optional[_Received] = None

    @property
    def done(self) -> bool:
        return self.state is not None and self.state.t >= self.state.horizon

    def reset(self, seed: int, realization: Optional[EpisodeRealization] = None) -> Observation:
        """Start a new episode.

        Args:
            seed: Episode seed; selects demands and lead times.
            realization: Pre-drawn realization to replay instead of sampling
                one from ``seed``.

        Returns:
            Observation at t = 0.
        """
        chain = self.chain
        if realization is None:
            realization = EpisodeRealization.sample(self.scenario, seed)
        if realization.horizon != chain.horizon:
            raise ContractViolationError(
                f"Realization covers {realization.horizon} steps, chain horizon is {chain.horizon}"
            )
        self.realization = realization

        production = np.zeros((len(chain.suppliers), self._l_max))
        for s in chain.suppliers:
            initial = chain.initial_production[s]
            production[s, : len(initial)] = initial
        transport = np.zeros((len(chain.links), self._l_max))
        for k, initial in enumerate(chain.initial_transport):
            transport[k, : len(initial)] = initial

        self.state = SupplyChainState(
            t=0,
            stocks=np.asarray(chain.initial_stock, dtype=float).copy(),
            production_pipeline=production,
            transport_pipeline=transport,
            next_demands=realization.demands[1].copy(),
            horizon=chain.horizon,
        )
        self._received = None
        self.trace = EpisodeTrace(chain) if self.record else None
        logger.debug(f"Reset '{self.scenario.name}' with seed {seed}")
        return self.build_observation()

    def build_observation(self) -> Observation:
        """Observation of the current state."""
        self._require_state()
        return build_observation(self.state, self.chain)

    def receive(self) -> SupplyChainState:
        """Advance the clock, deliver due material and serve customer demand.

        Returns:
            The state after arrivals and demand, before the decision executes.

        Raises:
            ContractViolationError: If the episode is over or a previous
                step was not completed with :meth:`dispatch`.
        """
        self._require_state()
        if self._received is not None:
            raise ContractViolationError("receive() called twice without dispatch()")
        if self.done:
            raise ContractViolationError("Episode is finished; call reset() first")
        state = self.state
        before = state.stocks.copy()
        state.t += 1

        produced_due = state.production_pipeline[:, 0].copy()
        transit_due = state.transport_pipeline[:, 0].copy()
        state.production_pipeline = np.roll(state.production_pipeline, -1, axis=1)
        state.production_pipeline[:, -1] = 0.0
        state.transport_pipeline = np.roll(state.transport_pipeline, -1, axis=1)
        state.transport_pipeline[:, -1] = 0.0

        arrived = np.zeros(self.chain.num_nodes)
        arrived[self._suppliers] += produced_due
        np.add.at(arrived, self._link_dst, transit_due)

        stocks = before + arrived
        discarded = np.maximum(stocks - self._stock_cap, 0.0)
        stocks = stocks - discarded

        demand = state.next_demands.copy()
        met = np.minimum(stocks[self._retailers], demand)
        unmet = demand - met
        stocks[self._retailers] -= met
        state.stocks = stocks

        self._received = _Received(before, arrived, discarded, demand, met, unmet)
        return state

    def dispatch(self, action: RawAction) -> tuple[Observation, StepOutcome]:
        """Execute a decision against the received state and close the step.

        Args:
            action: Production and shipments; must be feasible for the
                stock on hand after :meth:`receive`.

        Returns:
            (observation, outcome) after the step.

        Raises:
            ContractViolationError: If the action is infeasible or
                :meth:`receive` was not called first.
        """
        if self._received is None:
            raise ContractViolationError("dispatch() requires a preceding receive()")
        state = self.state
        received = self._received
        production, shipments = self._checked(action, state)
        self._received = None

        consumed = np.zeros(self.chain.num_nodes)
        np.add.at(consumed, self._link_src, shipments)
        shipped = shipments / self._ratio[self._link_src]
        stocks = state.stocks - consumed
        # Tolerated overshoot can leave a sub-ulp negative residue
        stocks = np.maximum(stocks, 0.0)
        state.stocks = stocks

        t = state.t
        production_lead = self.realization.production_lead[t]
        for s in range(len(production)):
            state.production_pipeline[s, production_lead[s] - 1] += production[s]
        transport_lead = self.realization.transport_lead[t]
        for k in range(len(shipped)):
            state.transport_pipeline[k, transport_lead[k] - 1] += shipped[k]

        chain = self.chain
        q = chain.num_nodes
        produced = np.zeros(q)
        produced[self._suppliers] = production
        transported = np.zeros(q)
        np.add.at(transported, self._link_src, shipped)
        unmet_nodes = np.zeros(q)
        unmet_nodes[self._retailers] = received.unmet
        node_costs = {
            "production": self._production_cost * produced,
            "processing": self._processing_cost * consumed * self._is_factory,
            "transport": chain.transport_cost * transported,
            "stock": self._stock_cost * stocks,
            "excess_penalty": chain.excess_penalty * received.discarded,
            "unmet_penalty": chain.unmet_penalty * unmet_nodes,
        }
        breakdown = {c: float(node_costs[c].sum()) for c in COST_TYPES}
        reward = -sum(breakdown.values())

        met_nodes = np.zeros(q)
        met_nodes[self._retailers] = received.met
        inflow = received.stocks_before + received.arrived
        expected = inflow - received.discarded - met_nodes - consumed
        scale = max(1.0, float(np.max(np.abs(inflow))))
        if np.any(np.abs(expected - stocks) > 1e-9 * scale):
            raise ContractViolationError(f"Mass balance violated at step {t}")

        if t < state.horizon:
            state.next_demands = self.realization.demands[t + 1].copy()
        else:
            state.next_demands = np.zeros_like(state.next_demands)

        outcome = StepOutcome(
            reward=reward,
            cost_breakdown=breakdown,
            unmet_units=received.unmet,
            discarded_units=received.discarded,
            done=t >= state.horizon,
            t=t,
            arrived=received.arrived,
            demand=received.demand,
            met=received.met,
            produced=production,
            consumed=consumed,
            shipped=shipped,
            stocks=stocks.copy(),
            node_costs=node_costs,
        )
        if self.trace is not None:
            self.trace.append(outcome)
        return self.build_observation(), outcome

    def step(self, action: RawAction) -> tuple[Observation, StepOutcome]:
        """Run a full step: :meth:`receive` followed by :meth:`dispatch`."""
        self.receive()
        return self.dispatch(action)

    def _require_state(self) -> None:
        if self.state is None:
            raise ContractViolationError("Simulator has no episode; call reset() first")

    def _checked(self, action: RawAction, state: SupplyChainState) -> tuple[np.ndarray, np.ndarray]:
        """Validate an action, absorbing overshoot within FEASIBILITY_TOLERANCE."""
        chain = self.chain
        production = np.asarray(action.production, dtype=float)
        shipments = np.asarray(action.shipments, dtype=float)
        if production.shape != self._production_cap.shape or shipments.shape != (len(chain.links),):
            raise ContractViolationError(
                f"Action shapes {production.shape}/{shipments.shape} do not match the chain"
            )
        if not (np.all(np.isfinite(production)) and np.all(np.isfinite(shipments))):
            raise ContractViolationError("Action contains non-finite values")
        if np.any(production < 0) or np.any(shipments < 0):
            raise ContractViolationError("Action quantities must be non-negative")

        slack = FEASIBILITY_TOLERANCE * np.maximum(self._production_cap, 1.0)
        over = production > self._production_cap + slack
        if np.any(over):
            s = int(np.argmax(over))
            raise ContractViolationError(
                f"Production {production[s]:g} at {chain.node_order[s]} exceeds "
                f"production_cap {self._production_cap[s]:g}"
            )
        production = np.minimum(production, self._production_cap)

        shipments = shipments.copy()
        for n in chain.shipping_nodes:
            ks = list(chain.outgoing_links[n])
            total = shipments[ks].sum()
            limit = state.stocks[n]
            bound = "stock"
            if self._is_factory[n] and self._processing_cap[n] < limit:
                limit = self._processing_cap[n]
                bound = "processing_cap"
            if total > limit + FEASIBILITY_TOLERANCE * max(limit, 1.0):
                raise ContractViolationError(
                    f"Shipments {total:g} from {chain.node_order[n]} exceed {bound} {limit:g} "
                    f"at step {state.t}"
                )
            if total > limit:
                shipments[ks] *= limit / total
        return production, shipments
