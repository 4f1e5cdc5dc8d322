"""
Tests for the supply chain simulator and the normalized environment
"""

import numpy as np
import pytest

from supplywise.core.chain import SCENARIO_NAMES, builtin_scenario
from supplywise.core.environment import SupplyChainEnv
from supplywise.core.simulator import (
    COST_TYPES,
    RawAction,
    SupplyChainSimulator,
    build_observation,
)
from supplywise.core.stochastic import EpisodeRealization
from supplywise.exceptions import ConfigurationError, ContractViolationError
from tests.conftest import assert_mass_balance, short_scenario, tiny_scenario


class TestReset:
    """Tests for episode start"""

    def test_initial_observation(self, default_scenario):
        """Test the t = 0 observation of the default chain"""
        sim = SupplyChainSimulator(default_scenario)
        obs = sim.reset(seed=1)
        assert len(obs) == 27
        assert np.all(obs.stocks == 800.0)
        # Suppliers: 600/840 next step and again the step after
        assert obs.arriving_next[0] == 600.0
        assert obs.arriving_later[1] == 840.0
        # Factory1 receives 300 from each supplier
        assert obs.arriving_next[2] == 600.0
        assert obs.arriving_next[6] == 480.0
        assert obs.remaining_steps == 360.0
        np.testing.assert_array_equal(obs.demands, sim.realization.demands[1])

    def test_invalid_scenario(self, default_scenario):
        """Test that an invalid scenario is rejected at construction"""
        from dataclasses import replace

        bad = replace(default_scenario, chain=replace(default_scenario.chain, horizon=0))
        with pytest.raises(ConfigurationError):
            SupplyChainSimulator(bad)

    def test_step_before_reset(self, default_scenario):
        """Test that stepping without an episode fails"""
        sim = SupplyChainSimulator(default_scenario)
        with pytest.raises(ContractViolationError, match="reset"):
            sim.step(RawAction.zeros(sim.chain))

    def test_realization_horizon_mismatch(self, default_scenario, short_n20):
        """Test that a realization of another horizon is rejected"""
        real = EpisodeRealization.sample(short_n20, 1)
        sim = SupplyChainSimulator(default_scenario)
        with pytest.raises(ContractViolationError, match="12 steps"):
            sim.reset(1, realization=real)


class TestStep:
    """Tests for the step cycle"""

    def test_first_step_arrivals(self, started_simulator):
        """Test arrivals, demand and idle dispatch on step 1"""
        sim = started_simulator
        demand = sim.state.next_demands.copy()
        _, out = sim.step(RawAction.zeros(sim.chain))
        assert out.t == 1
        np.testing.assert_allclose(out.arrived[:2], [600.0, 840.0])
        np.testing.assert_allclose(out.arrived[2:4], [600.0, 840.0])
        np.testing.assert_allclose(out.demand, demand)
        np.testing.assert_allclose(out.stocks[:2], [1400.0, 1640.0])
        np.testing.assert_allclose(out.stocks[6:], 800.0 + 480.0 - demand)
        assert out.cost_breakdown["production"] == 0.0
        assert out.cost_breakdown["stock"] == pytest.approx(out.stocks.sum())

    def test_reward_is_negative_cost(self, started_simulator):
        """Test reward identity and breakdown keys"""
        sim = started_simulator
        _, out = sim.step(RawAction.zeros(sim.chain))
        assert list(out.cost_breakdown) == list(COST_TYPES)
        assert out.reward == pytest.approx(-sum(out.cost_breakdown.values()))
        assert out.total_cost == -out.reward

    def test_production_and_shipment_costs(self, started_simulator):
        """Test that dispatches are charged when they leave"""
        sim = started_simulator
        chain = sim.chain
        shipments = np.zeros(len(chain.links))
        shipments[chain.link_index(2, 4)] = 300.0  # raw units at factory1
        action = RawAction(production=np.array([100.0, 0.0]), shipments=shipments)
        _, out = sim.step(action)
        assert out.cost_breakdown["production"] == pytest.approx(600.0)
        assert out.cost_breakdown["processing"] == pytest.approx(12.0 * 300.0)
        # 300 raw units become 100 product units in transit
        assert out.cost_breakdown["transport"] == pytest.approx(2.0 * 100.0)
        assert out.consumed[2] == pytest.approx(300.0)
        assert out.shipped[chain.link_index(2, 4)] == pytest.approx(100.0)

    def test_overflow_is_discarded(self, tiny):
        """Test discards above stock capacity"""
        from dataclasses import replace

        spec = replace(tiny, chain=replace(tiny.chain, initial_stock=(40.0, 40.0)))
        sim = SupplyChainSimulator(spec)
        sim.reset(0)
        _, out = sim.step(RawAction.zeros(sim.chain))
        assert out.discarded_units[0] == pytest.approx(10.0)
        # Both nodes start full and receive 10 units
        assert out.cost_breakdown["excess_penalty"] == pytest.approx(200.0)

    def test_lost_sales(self, tiny):
        """Test unmet demand when the retailer runs dry"""
        from dataclasses import replace

        spec = replace(tiny, demand=replace(tiny.demand, regular_mean=100.0))
        sim = SupplyChainSimulator(spec)
        sim.reset(0)
        _, out = sim.step(RawAction.zeros(sim.chain))
        assert out.met[0] == pytest.approx(20.0)
        assert out.unmet_units[0] == pytest.approx(80.0)
        assert out.cost_breakdown["unmet_penalty"] == pytest.approx(50.0 * 80.0)

    def test_infeasible_shipment(self, started_simulator):
        """Test that shipping more than stock raises with the node name"""
        sim = started_simulator
        shipments = np.zeros(len(sim.chain.links))
        shipments[sim.chain.link_index(4, 6)] = 5000.0
        action = RawAction(production=np.zeros(2), shipments=shipments)
        with pytest.raises(ContractViolationError, match="wholesaler1"):
            sim.step(action)

    def test_production_above_capacity(self, started_simulator):
        """Test that over-capacity production raises"""
        action = RawAction(production=np.array([700.0, 0.0]), shipments=np.zeros(12))
        with pytest.raises(ContractViolationError, match="production_cap"):
            started_simulator.step(action)

    def test_tolerated_overshoot(self, started_simulator):
        """Test that overshoot within tolerance is absorbed"""
        action = RawAction(production=np.array([600.0 * (1 + 1e-12), 0.0]), shipments=np.zeros(12))
        _, out = started_simulator.step(action)
        assert out.produced[0] == 600.0

    def test_receive_twice(self, started_simulator):
        """Test that receive() cannot be repeated within a step"""
        started_simulator.receive()
        with pytest.raises(ContractViolationError, match="twice"):
            started_simulator.receive()

    def test_dispatch_without_receive(self, started_simulator):
        """Test that dispatch() needs receive() first"""
        with pytest.raises(ContractViolationError, match="receive"):
            started_simulator.dispatch(RawAction.zeros(started_simulator.chain))

    def test_episode_end(self, short_n20):
        """Test done flag and stepping past the horizon"""
        sim = SupplyChainSimulator(short_n20)
        sim.reset(3)
        for _ in range(12):
            _, out = sim.step(RawAction.zeros(sim.chain))
        assert out.done
        assert sim.done
        assert np.all(sim.state.next_demands == 0.0)
        with pytest.raises(ContractViolationError, match="finished"):
            sim.step(RawAction.zeros(sim.chain))

    def test_lead_times_from_realization(self, short_n20):
        """Test that dispatched material arrives after its sampled lead time"""
        sim = SupplyChainSimulator(short_n20)
        sim.reset(5)
        lead = int(sim.realization.production_lead[1, 0])
        sim.step(RawAction(production=np.array([123.0, 0.0]), shipments=np.zeros(12)))
        assert sim.state.production_due(0).get(1 + lead, 0.0) >= 123.0

    def test_same_seed_same_episode(self, short_n20):
        """Test determinism of whole episodes"""
        costs = []
        for _ in range(2):
            sim = SupplyChainSimulator(short_n20)
            sim.reset(99)
            total = 0.0
            while not sim.done:
                _, out = sim.step(RawAction.zeros(sim.chain))
                total += out.total_cost
            costs.append(total)
        assert costs[0] == costs[1]


class TestObservation:
    """Tests for observation assembly"""

    def test_arriving_later_sums_future_steps(self, started_simulator):
        """Test that later arrivals sum every step after t + 1"""
        sim = started_simulator
        sim.state.production_pipeline[0] = [330.0, 60.0, 45.0, 0.0]
        obs = build_observation(sim.state, sim.chain)
        assert obs.arriving_next[0] == 330.0
        assert obs.arriving_later[0] == 105.0


class TestProperties:
    """Property tests over random feasible actions"""

    @pytest.mark.parametrize("name", ["N20", "rU200", "N60cl", "N20stc"])
    def test_mass_balance_and_bounds(self, name, rng):
        """Test mass balance, capacity and reward identity under random actions"""
        spec = short_scenario(name, 30)
        env = SupplyChainEnv(spec)
        sim = env.simulator
        env.reset(int(rng.integers(1 << 30)))
        done = False
        while not done:
            before = sim.state.stocks.copy()
            action = rng.uniform(-1.0, 1.0, env.action_size)
            _, reward, done, info = env.step(action)
            out = info["outcome"]
            assert_mass_balance(out, before)
            assert np.all(out.stocks >= 0.0)
            assert np.all(out.stocks <= np.asarray(spec.chain.stock_cap) + 1e-9)
            assert reward == pytest.approx(-sum(out.cost_breakdown.values()))


@pytest.mark.slow
class TestCatalogEpisodes:
    """Full random-action episodes on every catalog scenario"""

    @staticmethod
    def _check_episode(spec, seed, rng):
        env = SupplyChainEnv(spec)
        env.reset(seed)
        cap = np.asarray(spec.chain.stock_cap) + 1e-9
        done = False
        while not done:
            before = env.state.stocks.copy()
            _, reward, done, info = env.step(rng.uniform(-1.0, 1.0, env.action_size))
            out = info["outcome"]
            assert_mass_balance(out, before)
            assert np.all(out.stocks >= 0.0)
            assert np.all(out.stocks <= cap)
            assert reward == pytest.approx(-sum(out.cost_breakdown.values()))

    @pytest.mark.parametrize("name", SCENARIO_NAMES)
    def test_full_episode(self, name, rng):
        """Test invariants over a whole 360-step episode"""
        self._check_episode(builtin_scenario(name), int(rng.integers(1 << 30)), rng)

    def test_thousand_episodes(self, rng):
        """Test invariants over 1,000 episodes spread across the catalog"""
        specs = [builtin_scenario(name) for name in SCENARIO_NAMES]
        for k in range(1000):
            self._check_episode(specs[k % len(specs)], k, rng)


class TestEpisodeTrace:
    """Tests for the per-step trace export"""

    def test_trace_frame(self, tmp_path, short_n20):
        """Test trace rows and CSV schema header"""
        env = SupplyChainEnv(short_n20, record=True)
        env.reset(1)
        while not env.done:
            env.step(np.zeros(env.action_size))
        frame = env.trace.to_frame()
        assert len(frame) == 12 * 8
        assert list(frame.columns[:3]) == ["step", "node", "stock"]
        total = sum(env.trace.cost_breakdown().values())
        per_step = frame.groupby("step")["reward"].first().sum()
        assert -per_step == pytest.approx(total)
        path = tmp_path / "trace.csv"
        env.trace.save(path)
        assert path.read_text().startswith("# supplywise-episode-trace v1\n")


class TestEnvironment:
    """Tests for the normalized wrapper"""

    def test_sizes(self, default_scenario):
        """Test observation and action sizes of the default chain"""
        env = SupplyChainEnv(default_scenario)
        assert env.observation_size == 27
        assert env.action_size == 14

    def test_observation_range(self, short_n20):
        """Test that normalized observations stay in [-1, 1]"""
        env = SupplyChainEnv(short_n20)
        obs = env.reset(4)
        done = False
        while not done:
            assert np.all(np.abs(obs) <= 1.0)
            obs, _, done, _ = env.step(np.ones(env.action_size))

    def test_all_minus_one_is_idle(self, short_n20):
        """Test that an all -1 action produces and ships nothing"""
        env = SupplyChainEnv(short_n20)
        env.reset(4)
        _, _, _, info = env.step(-np.ones(env.action_size))
        assert np.all(info["action"].production == 0.0)
        assert np.all(info["action"].shipments == 0.0)

    def test_rule_sees_post_arrival_state(self, short_n20):
        """Test that step_planned decodes against stock after arrivals"""
        env = SupplyChainEnv(short_n20)
        env.reset(4)
        seen = {}

        def rule(state):
            seen["t"] = state.t
            seen["stock"] = state.stocks[2]
            return -np.ones(env.action_size)

        env.step_planned(rule)
        assert seen["t"] == 1
        assert seen["stock"] == pytest.approx(800.0 + 600.0)

    def test_tiny_chain_runs(self):
        """Test a generic two-node layout end to end"""
        env = SupplyChainEnv(tiny_scenario(horizon=5))
        env.reset(0)
        steps = 0
        while not env.done:
            env.step(np.zeros(env.action_size))
            steps += 1
        assert steps == 5
        assert env.observation_size == 2 + 4 + 1 + 1
