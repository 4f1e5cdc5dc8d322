"""
Tests for demand and lead-time generation
"""

import math

import numpy as np
import pytest

from supplywise.core.chain import builtin_scenario
from supplywise.core.stochastic import (
    DemandSpec,
    EpisodeRealization,
    LeadTimeSpec,
    Perturbation,
    Purpose,
    RngStream,
    demand_trace,
    derive_seed,
    expected_demand,
    expected_lead_time,
    forecast_demands,
    sample_demand,
    sample_lead_time,
    sinusoid,
)


class TestSinusoid:
    """Tests for the seasonal demand curve"""

    def test_peak_and_trough(self):
        """Test maxima and minima of the two-peak curve"""
        spec = DemandSpec()
        assert sinusoid(spec, 45, 360) == pytest.approx(300.0)
        assert sinusoid(spec, 135, 360) == pytest.approx(100.0)
        assert sinusoid(spec, 0, 360) == pytest.approx(200.0)

    def test_negative_step(self):
        """Test that negative steps are rejected"""
        with pytest.raises(ValueError, match="non-negative"):
            sinusoid(DemandSpec(), -1, 360)

    def test_expected_demand_is_clipped(self):
        """Test that the forecast respects the clipping range"""
        spec = DemandSpec(sin_min=0.0, sin_max=400.0, clip_min=0.0, clip_max=300.0)
        assert expected_demand(spec, 45, 360) == 300.0

    def test_forecast_table(self):
        """Test the forecast table shape and padding row"""
        table = forecast_demands(DemandSpec(kind="regular"), 10, 2)
        assert table.shape == (11, 2)
        assert np.all(table[0] == 0.0)
        assert np.all(table[1:] == 200.0)


class TestSampleDemand:
    """Tests for perturbed demand draws"""

    def test_no_noise_equals_forecast(self):
        """Test that zero noise reproduces the sinusoid"""
        spec = DemandSpec(perturbation=Perturbation.gaussian(0.0))
        rng = RngStream(3)
        for t in (1, 45, 200):
            assert sample_demand(spec, 0, t, rng) == expected_demand(spec, t, 360)

    def test_reproducible(self):
        """Test equal seeds give equal demands regardless of query order"""
        spec = DemandSpec(perturbation=Perturbation.gaussian(20.0))
        first = [sample_demand(spec, r, t, RngStream(11)) for r in (0, 1) for t in range(1, 30)]
        rng = RngStream(11)
        reverse = {
            (r, t): sample_demand(spec, r, t, rng) for r in (1, 0) for t in reversed(range(1, 30))
        }
        assert first == [reverse[(r, t)] for r in (0, 1) for t in range(1, 30)]

    def test_retailers_differ(self):
        """Test that retailers draw from different substreams"""
        spec = DemandSpec(perturbation=Perturbation.gaussian(20.0))
        rng = RngStream(5)
        a = [sample_demand(spec, 0, t, rng) for t in range(1, 20)]
        b = [sample_demand(spec, 1, t, rng) for t in range(1, 20)]
        assert a != b

    def test_clipping(self):
        """Test that huge noise is clipped to the physical range"""
        spec = DemandSpec(kind="regular", perturbation=Perturbation.gaussian(10_000.0))
        rng = RngStream(9)
        values = [sample_demand(spec, 0, t, rng) for t in range(1, 200)]
        assert min(values) >= 0.0
        assert max(values) <= 400.0
        assert 0.0 in values and 400.0 in values

    def test_uniform_noise_range(self):
        """Test uniform noise stays within its bounds"""
        spec = DemandSpec(kind="regular", perturbation=Perturbation.uniform(-50.0, 50.0))
        rng = RngStream(1)
        values = np.array([sample_demand(spec, 0, t, rng) for t in range(1, 361)])
        assert values.min() >= 150.0
        assert values.max() <= 250.0
        assert values.std() > 10.0

    def test_invalid_seed(self):
        """Test that negative seeds are rejected"""
        with pytest.raises(ValueError, match="64-bit"):
            RngStream(-1)


class TestLeadTimes:
    """Tests for lead-time draws"""

    def test_constant(self):
        """Test constant lead times"""
        spec = LeadTimeSpec(kind="constant", average=2, maximum=4)
        rng = RngStream(0)
        assert {sample_lead_time(spec, k, t, rng) for k in range(3) for t in range(1, 50)} == {2}

    def test_stochastic_range(self):
        """Test stochastic lead times stay within [1, maximum]"""
        spec = LeadTimeSpec()
        rng = RngStream(42)
        draws = [sample_lead_time(spec, k, t, rng) for k in range(12) for t in range(1, 361)]
        assert min(draws) >= 1
        assert max(draws) <= 4
        assert set(draws) == {1, 2, 3, 4}

    def test_stochastic_mean(self):
        """Test the empirical mean against the closed form"""
        spec = LeadTimeSpec()
        rng = RngStream(7)
        draws = [sample_lead_time(spec, k, t, rng) for k in range(20) for t in range(1, 361)]
        assert np.mean(draws) == pytest.approx(expected_lead_time(spec), abs=0.05)

    def test_expected_lead_time_closed_form(self):
        """Test 1 + E[min(Poisson(1), 3)]"""
        p = [math.exp(-1.0) / math.factorial(k) for k in range(3)]
        expected = 1.0 + (0 * p[0] + 1 * p[1] + 2 * p[2]) + 3 * (1.0 - sum(p))
        assert expected_lead_time(LeadTimeSpec()) == pytest.approx(expected)

    def test_average_one_is_constant(self):
        """Test that an average of one step never varies"""
        spec = LeadTimeSpec(kind="stochastic", average=1, maximum=3)
        assert expected_lead_time(spec) == 1.0
        assert sample_lead_time(spec, 0, 5, RngStream(1)) == 1

    def test_violations(self):
        """Test lead-time spec validation"""
        assert LeadTimeSpec(average=5, maximum=4).violations()
        assert LeadTimeSpec(kind="weibull").violations()
        assert not LeadTimeSpec().violations()


class TestDeriveSeed:
    """Tests for child seed derivation"""

    def test_deterministic(self):
        """Test equal inputs give equal seeds"""
        assert derive_seed(1009, Purpose.EVALUATION_EPISODE, 3) == derive_seed(1009, 5, 3)

    def test_distinct(self):
        """Test that purposes and indices separate seeds"""
        seeds = {derive_seed(101, p, i) for p in Purpose for i in range(5)}
        assert len(seeds) == len(Purpose) * 5

    def test_range(self):
        """Test seeds fit a 64-bit stream"""
        seed = derive_seed(2**40, 4, 1, 2)
        assert 0 <= seed < 2**64
        RngStream(seed)


class TestEpisodeRealization:
    """Tests for whole-episode realizations"""

    def test_shapes(self, default_scenario):
        """Test array shapes and padding"""
        real = EpisodeRealization.sample(default_scenario, 17)
        assert real.horizon == 360
        assert real.demands.shape == (361, 2)
        assert real.production_lead.shape == (361, 2)
        assert real.transport_lead.shape == (361, 12)
        assert real.production_lead[1:].min() >= 1

    def test_digest_stable(self, default_scenario):
        """Test equal seeds give equal digests and different seeds differ"""
        a = EpisodeRealization.sample(default_scenario, 17)
        b = EpisodeRealization.sample(default_scenario, 17)
        c = EpisodeRealization.sample(default_scenario, 18)
        assert a.digest() == b.digest()
        assert a.digest() != c.digest()
        assert len(a.digest()) == 64

    def test_matches_sample_demand(self, default_scenario):
        """Test that realizations use the same substreams as single draws"""
        real = EpisodeRealization.sample(default_scenario, 23)
        rng = RngStream(23)
        assert real.demands[40, 1] == sample_demand(default_scenario.demand, 1, 40, rng)

    def test_demand_trace(self):
        """Test the long demand table"""
        scenario = builtin_scenario("rN50cl")
        frame = demand_trace(scenario, 5)
        assert list(frame.columns) == ["step", "retailer", "demand"]
        assert len(frame) == 720
        assert set(frame["retailer"]) == {"retailer1", "retailer2"}
        real = EpisodeRealization.sample(scenario, 5)
        first = frame[(frame["step"] == 1) & (frame["retailer"] == "retailer1")]
        assert float(first["demand"].iloc[0]) == real.demands[1, 0]
