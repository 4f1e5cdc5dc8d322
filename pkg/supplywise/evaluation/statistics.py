"""Confidence intervals and agent comparisons."""

from __future__ import annotations

from typing import Dict, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from supplywise.evaluation.evaluator import EvalReport
from supplywise.exceptions import EpisodeMismatchError

COMPARISON_SCHEMA = "supplywise-comparison v1"
BOUNDS_SCHEMA = "supplywise-bounds v1"


def bootstrap_ci(
    samples: np.ndarray,
    iterations: int = 10_000,
    confidence: float = 0.95,
    seed: int = 0,
) -> Tuple[float, float]:
    """Basic (pivotal) bootstrap confidence interval for the mean.

    The interval is ``(2 m - q_hi, 2 m - q_lo)`` where m is the sample mean
    and q are quantiles of the resampled means.

    Args:
        samples: Observations, e.g. episode costs.
        iterations: Number of bootstrap resamples.
        confidence: Confidence level in (0, 1).
        seed: Resampling seed.

    Returns:
        (low, high) of the basic (pivotal) bootstrap interval. With skewed
        samples the mean may lie outside it.

    Raises:
        ValueError: With fewer than two samples or an invalid confidence.

    Example:
        >>> bootstrap_ci(np.full(10, 3.0))
        (3.0, 3.0)
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValueError(f"bootstrap_ci needs at least 2 samples, got {x.size}")
    if not 0 < confidence < 1:
        raise ValueError(f"Invalid confidence {confidence}. Must lie in (0, 1)")
    mean = float(x.mean())
    if np.all(x == x[0]):
        return mean, mean

    result = stats.bootstrap(
        (x,),
        np.mean,
        n_resamples=iterations,
        confidence_level=confidence,
        method="basic",
        random_state=np.random.default_rng(seed),
    )
    low, high = result.confidence_interval
    return float(low), float(high)


def gain(baseline_mean: float, challenger_mean: float) -> Tuple[float, float]:
    """Cost saved by the challenger over the baseline, absolute and in percent.

    Example:
        >>> value, percent = gain(10_298_000, 9_147_000)
        >>> value, round(percent, 1)
        (1151000, 11.2)
    """
    value = baseline_mean - challenger_mean
    percent = 100.0 * value / baseline_mean if baseline_mean != 0 else 0.0
    return value, percent


def check_same_episodes(first: EvalReport, second: EvalReport) -> None:
    """Raise EpisodeMismatchError unless both reports cover the same realizations."""
    if first.episode_set() != second.episode_set():
        missing = len(first.episode_set() ^ second.episode_set())
        raise EpisodeMismatchError(
            f"Reports '{first.agent}' and '{second.agent}' differ in {missing} episodes"
        )


def compare_report(
    reports: Mapping[str, EvalReport],
    bounds: Optional[Mapping[str, float]] = None,
    baseline: str = "lp",
    challenger: str = "ppo",
    iterations: int = 10_000,
    seed: int = 0,
) -> pd.DataFrame:
    """One comparison row for a scenario.

    Args:
        reports: Reports by agent name; must contain ``baseline`` and ``challenger``.
        bounds: Perfect-information bound per episode_id, if computed.
        baseline: Agent the gain is measured against.
        challenger: Agent whose gain is reported.
        iterations: Bootstrap resamples for the confidence intervals.
        seed: Bootstrap seed.

    Returns:
        DataFrame with bound, per-agent mean/std/CI and gain columns.

    Raises:
        EpisodeMismatchError: If the reports or bounds cover different episodes.
    """
    base, chal = reports[baseline], reports[challenger]
    check_same_episodes(base, chal)
    row: Dict[str, object] = {"scenario": base.scenario}

    if bounds is not None:
        if set(bounds) != set(base.episode_ids):
            raise EpisodeMismatchError("Bounds do not cover the evaluated episodes")
        values = np.array([bounds[e] for e in sorted(set(base.episode_ids))])
        row["bound_mean"] = float(values.mean())
        row["bound_std"] = float(values.std())

    for name, report in ((baseline, base), (challenger, chal)):
        row[f"{name}_mean"] = report.mean
        row[f"{name}_std"] = report.std
        if len(report) >= 2:
            low, high = bootstrap_ci(report.totals, iterations=iterations, seed=seed)
        else:
            low = high = report.mean
        row[f"{name}_ci_low"] = low
        row[f"{name}_ci_high"] = high

    value, percent = gain(base.mean, chal.mean)
    row["gain"] = value
    row["gain_pct"] = round(percent, 1)
    return pd.DataFrame([row])


def bounds_frame(bounds: Mapping[str, float]) -> pd.DataFrame:
    return pd.DataFrame({"episode_id": list(bounds), "bound": list(bounds.values())})
