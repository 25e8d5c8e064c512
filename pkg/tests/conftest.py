"""Shared synthetic-data generators.

Corpora are drawn from the package's own generative model (random per-series
coefficients, Gaussian transformed responses, lognormal time gaps), which
makes them usable both as regression fixtures and as generate-and-refit
oracles.
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from recordlaw.ingest import RecordSeries, SeriesKind
from recordlaw.transform import ImprovementSample, ModelForm, invert_ml, invert_speedrun, regressor


def make_speedrun_series(
    rng: np.random.Generator,
    series_id: str,
    length: int,
    alpha: float,
    beta: float,
    sigma2: float = 1.0,
    start_value: float = 3600.0,
    gap_zeta: float = 11.0,
    gap_gamma: float = 0.02,
    gap_sd: float = 0.3,
    model_form: ModelForm = ModelForm.POWER_LAW,
) -> RecordSeries:
    values = [start_value]
    ts = [0.0]
    sigma = math.sqrt(sigma2)
    for t in range(1, length):
        y = alpha + beta * regressor(model_form, t) + sigma * rng.normal()
        values.append(invert_speedrun(y, values[-1]))
        ts.append(ts[-1] + math.exp(gap_zeta + gap_gamma * t + gap_sd * rng.normal()))
    return RecordSeries(series_id, SeriesKind.SPEEDRUN, tuple(zip(ts, values)))


def make_speedrun_corpus(
    rng: np.random.Generator,
    n_series: int = 25,
    length: int = 60,
    mean_alpha: float = -2.0,
    mean_beta: float = -1.3,
    var_alpha: float = 0.08,
    var_beta: float = 0.1,
    sigma2: float = 0.8,
    **series_kwargs,
) -> list[RecordSeries]:
    corpus = []
    for i in range(n_series):
        a = mean_alpha + math.sqrt(var_alpha) * rng.normal()
        b = mean_beta + math.sqrt(var_beta) * rng.normal()
        corpus.append(
            make_speedrun_series(rng, f"series{i:02d}", length, a, b, sigma2, **series_kwargs)
        )
    return corpus


def make_ml_series(
    rng: np.random.Generator,
    series_id: str,
    length: int,
    alpha: float,
    beta: float,
    sigma2: float = 1.0,
    start_value: float = 0.45,
) -> RecordSeries:
    values = [start_value]
    ts = [0.0]
    sigma = math.sqrt(sigma2)
    for t in range(1, length):
        y = alpha + beta * math.log(t) + sigma * rng.normal()
        values.append(invert_ml(y, values[-1]))
        ts.append(ts[-1] + rng.uniform(1e5, 1e6))
    return RecordSeries(series_id, SeriesKind.ML_BENCHMARK, tuple(zip(ts, values)), metric_name="error_rate")


def make_ml_corpus(
    rng: np.random.Generator,
    n_groups: int = 254,
    mean_alpha: float = -1.5,
    mean_beta: float = -0.6,
    var_alpha: float = 0.2,
    sigma2: float = 1.16,
    mean_pairs: float = 3.8,
    min_pairs: int = 3,
    max_pairs: int = 13,
) -> list[RecordSeries]:
    """ML-shaped corpus: many short series, sizes drawn to a target mean.

    ``min_pairs`` counts improvements per series (records = pairs + 1), so
    min_pairs=3 mirrors a four-record inclusion filter.
    """
    corpus = []
    for i in range(n_groups):
        # shifted geometric, clipped: small sizes dominate, mean ~ mean_pairs
        pairs = min_pairs + rng.geometric(1.0 / (mean_pairs - min_pairs + 1.0)) - 1
        pairs = int(min(pairs, max_pairs))
        a = mean_alpha + math.sqrt(var_alpha) * rng.normal()
        corpus.append(
            make_ml_series(
                rng, f"bench{i:03d}", pairs + 1, a, mean_beta, sigma2,
                start_value=float(rng.uniform(0.2, 0.7)),
            )
        )
    return corpus


def samples_from_params(
    rng: np.random.Generator,
    n_groups: int,
    group_size: int,
    mean_alpha: float,
    mean_beta: float,
    var_alpha: float,
    var_beta: float,
    sigma2: float,
    model_form: ModelForm = ModelForm.POWER_LAW,
) -> list[ImprovementSample]:
    """Regression rows drawn directly from the mixed model (no record values)."""
    samples = []
    sigma = math.sqrt(sigma2)
    for g in range(n_groups):
        a = mean_alpha + math.sqrt(var_alpha) * rng.normal()
        b = mean_beta + math.sqrt(var_beta) * rng.normal()
        for t in range(1, group_size + 1):
            x = regressor(model_form, t)
            samples.append(
                ImprovementSample(f"group{g:03d}", t, a + b * x + sigma * rng.normal(), x)
            )
    return samples


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
