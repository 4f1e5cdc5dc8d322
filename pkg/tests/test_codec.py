"""
Tests for observation normalization and the cut-based action codec
"""

import numpy as np
import pytest

from supplywise.core.codec import (
    decode_action,
    encode_plan,
    normalize_observation,
    normalize_with,
    observation_maxima,
)
from supplywise.core.simulator import RawAction
from supplywise.exceptions import EncodingError
from tests.conftest import tiny_scenario


@pytest.fixture
def factory_state(started_simulator):
    """Copy of the N20 start state with factory1 holding 295 units."""
    state = started_simulator.state.copy()
    state.stocks[2] = 295.0
    return state


def _action(chain, production=None, **shipments):
    """Build a normalized action of -1 with selected link entries set."""
    a = -np.ones(len(chain.suppliers) + len(chain.links))
    if production is not None:
        a[: len(production)] = production
    for key, value in shipments.items():
        src, dst = (int(x) for x in key[1:].split("_"))
        a[len(chain.suppliers) + chain.link_index(src, dst)] = value
    return a


class TestNormalization:
    """Tests for observation scaling"""

    @pytest.mark.parametrize(
        "value, maximum, expected",
        [(400.0, 500.0, 0.6), (105.0, 1200.0, -0.825), (0.0, 800.0, -1.0), (800.0, 800.0, 1.0)],
    )
    def test_scaling(self, value, maximum, expected):
        """Test the 2 * v / M - 1 mapping"""
        result = normalize_with(np.array([value]), np.array([maximum]))
        assert result[0] == pytest.approx(expected)

    def test_zero_maximum(self):
        """Test that entries without a maximum map to -1"""
        result = normalize_with(np.array([5.0, 0.0]), np.array([0.0, 0.0]))
        np.testing.assert_array_equal(result, [-1.0, -1.0])

    def test_overflow_is_clipped(self):
        """Test that values above the maximum clip to 1"""
        assert normalize_with(np.array([3000.0]), np.array([1000.0]))[0] == 1.0

    def test_default_maxima(self, default_scenario):
        """Test the maxima of the default chain"""
        maxima = observation_maxima(default_scenario)
        assert len(maxima) == 27
        assert maxima[0] == 1600.0
        # supplier1 arrivals: production cap, then cap times (l_max - 1)
        assert tuple(maxima[8:10]) == (600.0, 1800.0)
        # factory1 arrivals bounded by both suppliers' stock capacity
        assert maxima[12] == 3400.0
        assert maxima[-1] == 360.0

    def test_initial_observation(self, started_simulator, default_scenario):
        """Test that the start observation normalizes into range"""
        obs = started_simulator.build_observation()
        values = normalize_observation(obs, default_scenario)
        assert values.shape == (27,)
        assert values[0] == pytest.approx(0.0)
        assert np.all(np.abs(values) <= 1.0)


class TestDecode:
    """Tests for decoding normalized actions"""

    def test_production(self):
        """Test that 0.05 with capacity 400 decodes to 210"""
        spec = tiny_scenario(production_cap=400.0)
        from supplywise.core.simulator import SupplyChainSimulator

        sim = SupplyChainSimulator(spec)
        sim.reset(0)
        raw = decode_action(np.array([0.05, -1.0]), sim.state, spec.chain)
        assert raw.production[0] == pytest.approx(210.0)

    def test_factory_cuts(self, factory_state, default_scenario):
        """Test the two-cut split of a factory's stock"""
        chain = default_scenario.chain
        a = _action(chain, n2_4=0.4915254237, n2_5=-0.8644067797)
        raw = decode_action(a, factory_state, chain)
        assert raw.shipments[chain.link_index(2, 4)] == pytest.approx(200.0, abs=1.0)
        assert raw.shipments[chain.link_index(2, 5)] == pytest.approx(20.0, abs=1.0)

    def test_all_minus_one(self, factory_state, default_scenario):
        """Test that -1 everywhere decodes to no activity"""
        chain = default_scenario.chain
        raw = decode_action(-np.ones(14), factory_state, chain)
        assert np.all(raw.production == 0.0)
        assert np.all(raw.shipments == 0.0)

    def test_all_plus_one(self, started_simulator, default_scenario):
        """Test that +1 ships to the lower-index successor only"""
        chain = default_scenario.chain
        raw = decode_action(np.ones(14), started_simulator.state, chain)
        np.testing.assert_allclose(raw.production, [600.0, 840.0])
        assert raw.shipments[chain.link_index(4, 6)] == 800.0
        assert raw.shipments[chain.link_index(4, 7)] == 0.0

    def test_equal_cuts_go_to_lower_index(self, started_simulator, default_scenario):
        """Test tie-breaking between equal cuts"""
        chain = default_scenario.chain
        a = _action(chain, n4_6=0.0, n4_7=0.0)
        raw = decode_action(a, started_simulator.state, chain)
        assert raw.shipments[chain.link_index(4, 6)] == 400.0
        assert raw.shipments[chain.link_index(4, 7)] == 0.0

    def test_out_of_range_values_are_clipped(self, started_simulator, default_scenario):
        """Test that outputs beyond [-1, 1] behave like the bounds"""
        chain = default_scenario.chain
        raw = decode_action(np.full(14, 5.0), started_simulator.state, chain)
        np.testing.assert_allclose(raw.production, [600.0, 840.0])

    def test_processing_cap_limits_factory(self, started_simulator, default_scenario):
        """Test that factory cuts apply to min(stock, processing cap)"""
        chain = default_scenario.chain
        state = started_simulator.state.copy()
        state.stocks[2] = 900.0
        raw = decode_action(_action(chain, n2_4=1.0), state, chain)
        assert raw.shipments[chain.link_index(2, 4)] == 840.0

    def test_product_units(self, started_simulator, default_scenario):
        """Test that product cuts consume ratio times the shipped units"""
        chain = default_scenario.chain
        state = started_simulator.state.copy()
        state.stocks[2] = 900.0
        raw = decode_action(_action(chain, n2_4=1.0), state, chain, factory_cut_units="product")
        assert raw.shipments[chain.link_index(2, 4)] == pytest.approx(840.0)
        state.stocks[2] = 300.0
        a = _action(chain, n2_4=0.0)
        raw = decode_action(a, state, chain, factory_cut_units="product")
        assert raw.shipments[chain.link_index(2, 4)] == pytest.approx(150.0)

    def test_invalid_units(self, started_simulator, default_scenario):
        """Test that unknown cut units are rejected"""
        with pytest.raises(ValueError, match="factory_cut_units"):
            decode_action(np.zeros(14), started_simulator.state, default_scenario.chain, "kg")


class TestEncode:
    """Tests for encoding physical plans"""

    def test_factory_example(self, factory_state, default_scenario):
        """Test encoding (200, 20) from a stock of 295"""
        chain = default_scenario.chain
        shipments = np.zeros(12)
        shipments[chain.link_index(2, 4)] = 200.0
        shipments[chain.link_index(2, 5)] = 20.0
        a = encode_plan(RawAction(np.zeros(2), shipments), factory_state, chain)
        assert a[2 + chain.link_index(2, 4)] == pytest.approx(0.492, abs=1e-3)
        assert a[2 + chain.link_index(2, 5)] == pytest.approx(-0.864, abs=1e-3)

    def test_idle_plan(self, started_simulator, default_scenario):
        """Test that an idle plan encodes to all -1"""
        a = encode_plan(RawAction.zeros(default_scenario.chain), started_simulator.state,
                        default_scenario.chain)
        np.testing.assert_array_equal(a, -np.ones(14))

    def test_empty_stock_encodes_minus_one(self, started_simulator, default_scenario):
        """Test that a node without stock encodes as -1"""
        chain = default_scenario.chain
        state = started_simulator.state.copy()
        state.stocks[4] = 0.0
        a = encode_plan(RawAction.zeros(chain), state, chain)
        assert a[2 + chain.link_index(4, 6)] == -1.0

    @pytest.mark.parametrize("units", ["raw", "product"])
    def test_decode_inverts_encode(self, units, started_simulator, default_scenario, rng):
        """Test decode(encode(plan)) == plan for random feasible plans"""
        chain = default_scenario.chain
        state = started_simulator.state
        for _ in range(50):
            plan = decode_action(rng.uniform(-1, 1, 14), state, chain, units)
            encoded = encode_plan(plan, state, chain, units)
            assert np.all(np.abs(encoded) <= 1.0)
            again = decode_action(encoded, state, chain, units)
            np.testing.assert_allclose(again.production, plan.production, atol=1e-8)
            np.testing.assert_allclose(again.shipments, plan.shipments, atol=1e-8)

    @pytest.mark.slow
    @pytest.mark.parametrize("units", ["raw", "product"])
    def test_decode_inverts_encode_across_episode(
        self, units, started_simulator, default_scenario, rng
    ):
        """Test the round trip on 10,000 plans over states of a random-action episode"""
        chain = default_scenario.chain
        sim = started_simulator
        states = []
        for t in range(20):
            state = sim.receive()
            states.append(state.copy())
            if t % 4 == 0:
                empty = state.copy()
                empty.stocks[[2, 4, 6]] = 0.0
                states.append(empty)
            sim.dispatch(decode_action(rng.uniform(-1, 1, 14), state, chain, units))
        draws = 10_000 // len(states) + 1
        for state in states:
            for _ in range(draws):
                plan = decode_action(rng.uniform(-1, 1, 14), state, chain, units)
                again = decode_action(encode_plan(plan, state, chain, units), state, chain, units)
                np.testing.assert_allclose(again.production, plan.production, rtol=1e-9, atol=1e-9)
                np.testing.assert_allclose(again.shipments, plan.shipments, rtol=1e-9, atol=1e-9)

    def test_negative_quantity(self, started_simulator, default_scenario):
        """Test that negative quantities cannot be encoded"""
        plan = RawAction(np.array([-1.0, 0.0]), np.zeros(12))
        with pytest.raises(EncodingError, match="negative"):
            encode_plan(plan, started_simulator.state, default_scenario.chain)

    def test_production_over_capacity(self, started_simulator, default_scenario):
        """Test that over-capacity production is rejected"""
        plan = RawAction(np.array([601.0, 0.0]), np.zeros(12))
        with pytest.raises(EncodingError, match="supplier1"):
            encode_plan(plan, started_simulator.state, default_scenario.chain)

    def test_shipments_over_stock(self, factory_state, default_scenario):
        """Test that shipping more than the stock is rejected"""
        chain = default_scenario.chain
        shipments = np.zeros(12)
        shipments[chain.link_index(2, 4)] = 300.0
        with pytest.raises(EncodingError, match="factory1"):
            encode_plan(RawAction(np.zeros(2), shipments), factory_state, chain)
