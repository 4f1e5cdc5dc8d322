"""Normalized, gym-style view of the simulator.

:class:`SupplyChainEnv` speaks the agent's language: observations and
actions live in [-1, 1] and rewards are the negative step costs. Actions
are decoded after the step's arrivals and demand, so cuts apply to the
stock that is actually available when material is dispatched.
"""

from __future__ import annotations

from typing import Any, Callable, Dict, Optional, Protocol, Tuple

import numpy as np

from supplywise.core.chain import ScenarioSpec
from supplywise.core.codec import (
    NormalizedAction,
    NormalizedObs,
    decode_action,
    normalize_with,
    observation_maxima,
)
from supplywise.core.simulator import EpisodeTrace, SupplyChainSimulator, SupplyChainState
from supplywise.core.stochastic import EpisodeRealization

ActionRule = Callable[[SupplyChainState], NormalizedAction]
StepResult = Tuple[NormalizedObs, float, bool, Dict[str, Any]]


class Agent(Protocol):
    """Anything that can drive a :class:`SupplyChainEnv` through an episode."""

    name: str

    def begin_episode(self) -> None: ...

    def act(self, env: SupplyChainEnv, obs: NormalizedObs) -> StepResult: ...


class SupplyChainEnv:
    """Simulator wrapper with normalized observations and actions.

    Attributes:
        scenario: Scenario being simulated.
        simulator: Underlying physical simulator.
        factory_cut_units: Factory cut denomination passed to the decoder.
    """

    def __init__(
        self,
        scenario: ScenarioSpec,
        factory_cut_units: str = "raw",
        record: bool = False,
    ) -> None:
        self.scenario = scenario
        self.simulator = SupplyChainSimulator(scenario, record=record)
        self.factory_cut_units = factory_cut_units
        self._maxima = observation_maxima(scenario)

    @property
    def observation_size(self) -> int:
        return len(self._maxima)

    @property
    def action_size(self) -> int:
        return len(self.scenario.chain.suppliers) + len(self.scenario.chain.links)

    @property
    def state(self) -> SupplyChainState:
        return self.simulator.state

    @property
    def realization(self) -> Optional[EpisodeRealization]:
        return self.simulator.realization

    @property
    def trace(self) -> Optional[EpisodeTrace]:
        return self.simulator.trace

    @property
    def done(self) -> bool:
        return self.simulator.done

    def reset(self, seed: int, realization: Optional[EpisodeRealization] = None) -> NormalizedObs:
        obs = self.simulator.reset(seed, realization=realization)
        return normalize_with(obs.values, self._maxima)

    def step(self, action: NormalizedAction) -> StepResult:
        """Advance one step with a normalized action chosen before the step."""
        action = np.asarray(action, dtype=float)
        return self.step_planned(lambda _state: action)

    def step_planned(self, rule: ActionRule) -> StepResult:
        """Advance one step, asking ``rule`` for the action after arrivals and demand.

        Args:
            rule: Called with the post-arrival state; returns a normalized action.

        Returns:
            (normalized observation, reward, done, info) where info holds the
            StepOutcome under 'outcome' and the decoded RawAction under 'action'.
        """
        state = self.simulator.receive()
        raw = decode_action(rule(state), state, self.scenario.chain, self.factory_cut_units)
        obs, outcome = self.simulator.dispatch(raw)
        info = {"outcome": outcome, "action": raw}
        return normalize_with(obs.values, self._maxima), outcome.reward, outcome.done, info
