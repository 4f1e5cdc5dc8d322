"""
Tests for evaluation, statistics, tuning and campaigns
"""

import math

import numpy as np
import pytest
from scipy import stats

from supplywise.agents.ppo import PolicyBundle, PpoAgent, PpoHyperparams
from supplywise.agents.training import CurveRecord
from supplywise.core.simulator import COST_TYPES
from supplywise.evaluation.campaign import (
    DEFAULT_TRAINING_SEEDS,
    CampaignSpec,
    episode_bounds,
    run_campaign,
)
from supplywise.evaluation.evaluator import (
    DEFAULT_EVAL_SEEDS,
    EVALUATION_SCHEMA,
    TRACE_QUANTITIES,
    EvalPlan,
    EvalReport,
    evaluate_agent,
    read_reports,
)
from supplywise.evaluation.statistics import (
    bootstrap_ci,
    bounds_frame,
    check_same_episodes,
    compare_report,
    gain,
)
from supplywise.evaluation.tuning import (
    SEARCH_SPACE,
    TrialResult,
    TuningResult,
    random_search_tune,
    sample_hyperparams,
    should_prune,
)
from supplywise.exceptions import (
    ConfigurationError,
    ContractViolationError,
    EpisodeMismatchError,
    TrainingDivergenceError,
)
from supplywise.planning.lp_agent import LpAgent, extract_lp_agent, solve_forecast
from supplywise.utils.io import read_csv
from tests.conftest import tiny_scenario

SMALL = PpoHyperparams(n_steps=8, n_epochs=2, batch_size=8, n_actors=2, hidden_sizes=(8, 8))
SHORT_PLAN = EvalPlan(seeds=(1, 2), episodes_per_seed=2)


class IdleAgent:
    """Never produces or ships."""

    name = "idle"

    def begin_episode(self):
        pass

    def act(self, env, obs):
        return env.step(-np.ones(env.action_size))


def _report(agent, totals, ids=None):
    n = len(totals)
    return EvalReport(
        agent=agent,
        scenario="N20",
        episode_ids=ids or [f"e{i}" for i in range(n)],
        models=[""] * n,
        totals=np.asarray(totals, dtype=float),
        breakdowns=np.zeros((n, len(COST_TYPES))),
        digests=["d"] * n,
        steps={q: np.zeros((n, 3)) for q in TRACE_QUANTITIES},
    )


class TestEvalPlan:
    """Tests for evaluation episode selection"""

    def test_default_plan(self):
        """Test the fixed seeds and episode ids"""
        plan = EvalPlan()
        assert plan.seeds == DEFAULT_EVAL_SEEDS
        assert plan.num_episodes == 100
        episodes = plan.episodes()
        assert episodes[0][0] == "1009-0"
        assert episodes[-1][0] == "10193-9"
        assert len({seed for _, seed in episodes}) == 100

    def test_episodes_are_stable(self):
        """Test that episode seeds do not depend on the plan instance"""
        assert SHORT_PLAN.episodes() == EvalPlan((1, 2), 2).episodes()

    def test_invalid_plan(self):
        """Test duplicate seeds and empty plans"""
        with pytest.raises(ConfigurationError, match="distinct"):
            EvalPlan(seeds=(1, 1)).validate()
        assert EvalPlan(seeds=(), episodes_per_seed=0).violations() == [
            "at least one evaluation seed is required",
            "episodes_per_seed must be positive",
        ]


class TestEvaluateAgent:
    """Tests for running agents on shared episodes"""

    def test_agents_share_episodes(self, short_n20):
        """Test that two agents see identical realizations"""
        idle = evaluate_agent(IdleAgent(), short_n20, SHORT_PLAN)
        lp = evaluate_agent(
            LpAgent(extract_lp_agent(solve_forecast(short_n20))), short_n20, SHORT_PLAN
        )
        check_same_episodes(idle, lp)
        assert idle.digests == lp.digests
        assert len(set(idle.digests)) == 4
        assert lp.mean < idle.mean

    def test_report_tables(self, short_n20):
        """Test the per-episode and per-step tables"""
        report = evaluate_agent(IdleAgent(), short_n20, SHORT_PLAN, model="m1")
        frame = report.to_frame()
        assert list(frame.columns) == ["episode_id", "agent", "model", "total_cost"] + list(
            COST_TYPES
        )
        np.testing.assert_allclose(frame["total_cost"], frame[list(COST_TYPES)].sum(axis=1))
        assert set(frame["model"]) == {"m1"}
        trace = report.trace_frame()
        assert len(trace) == 5 * 12
        # The idle agent never produces
        assert trace[trace["quantity"] == "production"]["mean"].max() == 0.0

    def test_read_reports(self, tmp_path, short_n20):
        """Test that a saved report reads back per agent"""
        report = evaluate_agent(IdleAgent(), short_n20, SHORT_PLAN)
        path = report.save(tmp_path / "evaluation.csv")
        loaded = read_reports(path, "N20")
        assert list(loaded) == ["idle"]
        assert loaded["idle"].episode_ids == report.episode_ids
        np.testing.assert_allclose(loaded["idle"].totals, report.totals)

    def test_pool(self):
        """Test pooling several models of one agent"""
        a = _report("ppo", [1.0, 2.0])
        b = _report("ppo", [3.0, 4.0])
        pooled = EvalReport.pool([a, b])
        assert len(pooled) == 4
        assert pooled.mean == 2.5
        assert pooled.std == pytest.approx(np.std([1.0, 2.0, 3.0, 4.0]))

    def test_pool_mixed_scenarios(self):
        """Test that reports of different scenarios cannot be pooled"""
        other = _report("ppo", [1.0])
        other.scenario = "N40"
        with pytest.raises(EpisodeMismatchError):
            EvalReport.pool([_report("ppo", [1.0]), other])

    def test_ppo_size_mismatch(self, short_n20):
        """Test that a bundle for another chain is rejected"""
        agent = PpoAgent(PolicyBundle.create(5, 3, seed=0))
        with pytest.raises(ContractViolationError, match="expects 5 observations"):
            evaluate_agent(agent, short_n20, SHORT_PLAN)

    def test_lp_chain_mismatch(self, short_n20):
        """Test that a plan for another chain is rejected"""
        tiny = tiny_scenario()
        agent = LpAgent(extract_lp_agent(solve_forecast(tiny)))
        with pytest.raises(ContractViolationError, match="different chain"):
            evaluate_agent(agent, short_n20, SHORT_PLAN)


class TestStatistics:
    """Tests for confidence intervals and comparisons"""

    def test_constant_samples(self):
        """Test the zero-width interval of identical costs"""
        assert bootstrap_ci(np.full(10, 3.0)) == (3.0, 3.0)

    def test_interval_ordering(self, rng):
        """Test interval ordering and reproducibility"""
        samples = rng.normal(100.0, 10.0, 50)
        low, high = bootstrap_ci(samples, iterations=2000, seed=3)
        assert low < high
        assert bootstrap_ci(samples, iterations=2000, seed=3) == (low, high)
        narrow = bootstrap_ci(samples, iterations=2000, confidence=0.5, seed=3)
        assert narrow[1] - narrow[0] < high - low

    def test_matches_scipy_basic_interval(self, rng):
        """Test that the interval is the unmodified SciPy basic bootstrap"""
        samples = rng.lognormal(10.0, 1.5, 30)
        expected = stats.bootstrap(
            (samples,), np.mean, n_resamples=2000, confidence_level=0.9,
            method="basic", random_state=np.random.default_rng(11),
        ).confidence_interval
        low, high = bootstrap_ci(samples, iterations=2000, confidence=0.9, seed=11)
        assert (low, high) == (float(expected.low), float(expected.high))

    def test_invalid_inputs(self):
        """Test sample count and confidence checks"""
        with pytest.raises(ValueError, match="at least 2"):
            bootstrap_ci(np.array([1.0]))
        with pytest.raises(ValueError, match="confidence"):
            bootstrap_ci(np.array([1.0, 2.0]), confidence=1.5)

    def test_gain(self):
        """Test absolute and relative savings"""
        value, percent = gain(10_298_000, 9_147_000)
        assert value == 1_151_000
        assert round(percent, 1) == 11.2
        assert gain(0.0, 5.0) == (-5.0, 0.0)

    def test_compare_report(self):
        """Test the comparison row"""
        reports = {
            "lp": _report("lp", [10_200_000, 10_396_000]),
            "ppo": _report("ppo", [9_100_000, 9_194_000]),
        }
        bounds = {"e0": 8_000_000.0, "e1": 8_200_000.0}
        row = compare_report(reports, bounds, iterations=500).iloc[0]
        assert row["scenario"] == "N20"
        assert row["bound_mean"] == 8_100_000.0
        assert row["lp_mean"] == 10_298_000.0
        assert row["ppo_mean"] == 9_147_000.0
        assert row["gain"] == 1_151_000.0
        assert row["gain_pct"] == 11.2
        assert row["ppo_ci_low"] <= row["ppo_mean"] <= row["ppo_ci_high"]

    def test_compare_without_bounds(self):
        """Test that bound columns are omitted when not computed"""
        reports = {"lp": _report("lp", [2.0, 4.0]), "ppo": _report("ppo", [1.0, 3.0])}
        frame = compare_report(reports, iterations=200)
        assert "bound_mean" not in frame.columns

    def test_episode_mismatch(self):
        """Test that different episode sets cannot be compared"""
        reports = {
            "lp": _report("lp", [1.0, 2.0]),
            "ppo": _report("ppo", [1.0, 2.0], ids=["e0", "x1"]),
        }
        with pytest.raises(EpisodeMismatchError, match="differ in 2 episodes"):
            compare_report(reports)

    def test_bounds_mismatch(self):
        """Test that bounds must cover the evaluated episodes"""
        reports = {"lp": _report("lp", [1.0, 2.0]), "ppo": _report("ppo", [1.0, 2.0])}
        with pytest.raises(EpisodeMismatchError, match="Bounds"):
            compare_report(reports, {"e0": 0.5})

    def test_bounds_frame(self):
        """Test the bounds table"""
        frame = bounds_frame({"a": 1.0, "b": 2.0})
        assert list(frame.columns) == ["episode_id", "bound"]
        assert frame["bound"].sum() == 3.0


class TestTuning:
    """Tests for random search and pruning"""

    def test_should_prune(self):
        """Test the median rule"""
        history = [[10.0, 8.0], [30.0], [20.0, 15.0]]
        assert should_prune(history, 0, 25.0)
        assert not should_prune(history, 0, 20.0)
        assert not should_prune(history, 1, 11.5)
        assert should_prune(history, 1, 12.0)
        assert not should_prune(history, 2, 1e9)

    def test_samples_stay_in_space(self, rng):
        """Test that every sampled value belongs to its domain"""
        for _ in range(50):
            hp = sample_hyperparams(rng).validate()
            assert hp.n_steps in SEARCH_SPACE["n_steps"]
            assert hp.batch_size in SEARCH_SPACE["batch_size"]
            assert hp.hidden_sizes in SEARCH_SPACE["hidden_sizes"]
            assert hp.activation in SEARCH_SPACE["activation"]
            assert 0.0 <= hp.vf_coef <= 1.0
            assert 1e-5 <= hp.learning_rate <= 1e-2

    def test_result_selection(self):
        """Test best-trial selection and the frame export"""
        hp = PpoHyperparams()
        result = TuningResult(
            [
                TrialResult(0, hp, "complete", [50.0, 40.0]),
                TrialResult(1, PpoHyperparams(hidden_sizes=(128, 128)), "complete", [45.0, 30.0]),
                TrialResult(2, hp, "pruned", [20.0]),
                TrialResult(3, hp, "failed", [], "diverged"),
            ]
        )
        assert result.best_trial.number == 1
        assert result.best_hyperparams.hidden_sizes == (128, 128)
        assert math.isinf(result.trials[3].best_cost)
        frame = result.to_frame()
        assert list(frame["status"]) == ["complete", "complete", "pruned", "failed"]
        assert frame.loc[1, "hidden_sizes"] == "128x128"

    def test_defaults_when_nothing_completes(self):
        """Test the fallback configuration"""
        result = TuningResult([TrialResult(0, PpoHyperparams.baseline(), "failed")])
        assert result.best_trial is None
        assert result.best_hyperparams == PpoHyperparams()

    def test_random_search(self, tiny, mocker, tmp_path):
        """Test trial bookkeeping with training replaced by fixed curves"""
        curves = iter([[100.0, 80.0], [200.0, 50.0], [90.0, 70.0], None])
        seen = []

        def fake_train(scenario, seed, total_steps, eval_every, eval_episodes, hyperparams,
                       on_evaluation):
            seen.append(hyperparams)
            costs = next(curves)
            if costs is None:
                raise TrainingDivergenceError("Non-finite PPO loss (nan)")
            for k, cost in enumerate(costs, start=1):
                if on_evaluation(CurveRecord(k * eval_every, cost, 0.0, False)) is False:
                    break

        mocker.patch("supplywise.evaluation.tuning.train", side_effect=fake_train)
        result = random_search_tune(tiny, trials=4, steps_per_trial=100, eval_every=50,
                                    eval_episodes=1, seed=3)
        assert seen[0] == PpoHyperparams.baseline()
        assert [t.status for t in result.trials] == ["complete", "pruned", "complete", "failed"]
        assert result.trials[1].checkpoints == [200.0]
        assert result.trials[2].checkpoints == [90.0, 70.0]
        assert result.best_trial.number == 2
        assert result.save(tmp_path / "tuning.csv").exists()

    def test_invalid_settings(self, tiny):
        """Test that non-positive budgets are rejected"""
        with pytest.raises(ConfigurationError):
            random_search_tune(tiny, trials=0)


class TestCampaignSpec:
    """Tests for campaign settings"""

    def test_presets(self):
        """Test the full and desk scales"""
        full = CampaignSpec.preset("full", "rN50")
        assert full.training_seeds == DEFAULT_TRAINING_SEEDS
        assert full.total_steps == 7_200_000
        desk = CampaignSpec.preset("desk")
        assert desk.training_seeds == (101,)
        assert desk.total_steps == 500_000
        with pytest.raises(ValueError, match="preset"):
            CampaignSpec.preset("huge")

    def test_overrides(self):
        """Test that None overrides are ignored"""
        spec = CampaignSpec.desk().with_overrides(total_steps=1000, scenario=None)
        assert spec.total_steps == 1000
        assert spec.scenario == "N20"

    def test_validation(self):
        """Test that campaign problems are collected"""
        spec = CampaignSpec(training_seeds=(1, 1), total_steps=0)
        with pytest.raises(ConfigurationError) as excinfo:
            spec.validate()
        assert len(excinfo.value.violations) == 2

    def test_save_and_load(self, tmp_path):
        """Test the TOML round trip"""
        spec = CampaignSpec(
            scenario="rU200cl", training_seeds=(7, 8), eval_plan=SHORT_PLAN, hyperparams=SMALL
        )
        path = tmp_path / "campaign.toml"
        spec.save(path)
        assert CampaignSpec.load(path) == spec

    def test_load_missing(self, tmp_path):
        """Test loading a missing campaign file"""
        with pytest.raises(FileNotFoundError):
            CampaignSpec.load(tmp_path / "missing.toml")


class TestCampaign:
    """End-to-end campaigns on a tiny chain"""

    @pytest.fixture
    def spec(self, tmp_path):
        scenario_path = tmp_path / "tiny.toml"
        tiny_scenario(horizon=5).save(scenario_path)
        return CampaignSpec(
            scenario=str(scenario_path),
            training_seeds=(1,),
            total_steps=32,
            eval_every=16,
            eval_episodes=1,
            eval_plan=SHORT_PLAN,
            hyperparams=SMALL,
        )

    def test_outputs(self, spec, tmp_path):
        """Test reports, bounds and written files"""
        record = run_campaign(spec, tmp_path / "results")
        out = tmp_path / "results" / "tiny2"
        assert record.out_dir == out
        for name in ("campaign.toml", "evaluation.csv", "bounds.csv", "comparison.csv",
                     "trace.csv", "checkpoints/ppo_seed1.pt", "curves/curve_seed1.csv"):
            assert (out / name).exists(), name
        assert set(record.reports) == {"lp", "ppo"}
        assert len(record.bounds) == 4
        row = record.comparison.iloc[0]
        # Without randomness the LP plan is optimal for every episode
        assert row["lp_mean"] == pytest.approx(row["bound_mean"], rel=1e-6)
        assert row["bound_mean"] <= row["ppo_mean"] * (1 + 1e-9)
        assert CampaignSpec.load(out / "campaign.toml") == spec

    def test_training_failure(self, spec, tmp_path, mocker):
        """Test that a failed seed is recorded and the LP still reported"""
        curve = [CurveRecord(16, 10.0, 0.0, True)]
        mocker.patch(
            "supplywise.evaluation.campaign.train",
            side_effect=TrainingDivergenceError("PPO update diverged", curve=curve),
        )
        record = run_campaign(spec.with_overrides(compute_bounds=False), tmp_path)
        assert set(record.failures) == {1}
        assert list(record.reports) == ["lp"]
        assert record.comparison is None
        assert "curve_seed1" in record.files
        frame = read_csv(record.files["evaluation"], EVALUATION_SCHEMA)
        assert set(frame["agent"]) == {"lp"}

    def test_lp_only(self, spec, tmp_path):
        """Test a campaign without PPO training"""
        record = run_campaign(spec, tmp_path, train_ppo=False)
        assert list(record.reports) == ["lp"]
        assert "bounds" in record.files

    def test_episode_bounds(self, tiny):
        """Test one bound per planned episode"""
        bounds = episode_bounds(tiny, SHORT_PLAN)
        assert list(bounds) == [eid for eid, _ in SHORT_PLAN.episodes()]
