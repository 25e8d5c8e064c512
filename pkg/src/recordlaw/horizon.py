"""Clock-time record forecasting: per-series time-gap regression with a
positivity check, Monte-Carlo simulation of future trajectories, and
fixed-horizon evaluation against the no-change baseline.

The gap model regresses log(T_{t+1} - T_t) on t.  A positive slope keeps
the regression (gaps stretch over time); otherwise simulation bootstraps
from the historical gaps, encoding the prior that gaps should not shrink
exponentially.  Improvement sizes come from the per-series fixed-effects
power-law regression fit to the same prefix, so no quantity used at
forecast time depends on records beyond index N.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .baselines import FixedEffectsEntry, fit_fixed_effects, ols_qr
from .bench import BenchmarkReport, _summarize
from .errors import ConfigError, ParseError
from .ingest import RecordSeries, SeriesKind
from .transform import ModelForm, build_design, invert, regressor

WEEK_SECONDS = 7 * 86_400.0


@dataclass(frozen=True)
class GapModel:
    """Time-gap model for one series: regression or historical bootstrap."""

    mode: str  # "regression" | "bootstrap"
    zeta: float = math.nan
    gamma: float = math.nan
    residual_sd: float = math.nan
    historical_gaps: tuple[float, ...] = ()

    def __post_init__(self):
        if self.mode == "regression":
            if not self.gamma > 0:
                raise ValueError("regression mode requires gamma > 0")
        elif self.mode == "bootstrap":
            if not self.historical_gaps:
                raise ValueError("bootstrap mode requires historical gaps")
        else:
            raise ValueError(f"unknown gap model mode {self.mode!r}")

    def sample_gap(self, t: int, rng: np.random.Generator) -> float:
        if self.mode == "regression":
            eps = rng.normal(0.0, self.residual_sd)
            return math.exp(self.zeta + self.gamma * t + eps)
        return float(self.historical_gaps[rng.integers(0, len(self.historical_gaps))])


@dataclass(frozen=True)
class HorizonConfig:
    delta_t: float = 8 * WEEK_SECONDS
    n_min: int = 15
    n_max: int = 45
    n_simulations: int = 1  # medians of M > 1 runs are reported separately
    seed: int = 0

    def __post_init__(self):
        if self.delta_t <= 0:
            raise ValueError("delta_t must be > 0")
        if self.n_min < 15:
            raise ValueError(f"n_min must be >= 15 for an identifiable gap regression, got {self.n_min}")
        if self.n_max < self.n_min:
            raise ValueError("n_max must be >= n_min")
        if self.n_simulations < 1:
            raise ValueError("n_simulations must be >= 1")


def fit_gap_model(series: RecordSeries, n: int) -> GapModel:
    """OLS of log gaps on t over t <= N-1, falling back to gap bootstrap
    when the slope estimate is not positive."""
    if n < 15:
        raise ValueError(f"N must be >= 15, got {n}")
    if len(series) < n:
        raise ValueError(f"{series.series_id}: need >= {n} records, have {len(series)}")
    ts = series.timestamps
    gaps = np.diff(ts[:n])
    if np.any(gaps <= 0):
        raise ParseError(f"{series.series_id}: non-positive time gap (duplicate timestamps)")
    t_idx = np.arange(1, n, dtype=float)
    X = np.column_stack([np.ones(n - 1), t_idx])
    coef, resid_var = ols_qr(X, np.log(gaps))
    zeta, gamma = float(coef[0]), float(coef[1])
    if gamma > 0:
        return GapModel("regression", zeta=zeta, gamma=gamma, residual_sd=math.sqrt(resid_var))
    return GapModel("bootstrap", historical_gaps=tuple(float(g) for g in gaps))


def simulate_trajectory(
    improvement: FixedEffectsEntry,
    gap: GapModel,
    start_record: float,
    start_time: float,
    start_index: int,
    delta_t: float,
    rng: np.random.Generator,
    kind: SeriesKind = SeriesKind.SPEEDRUN,
    model_form: ModelForm = ModelForm.POWER_LAW,
) -> float:
    """Record value at start_time + delta_t along one simulated trajectory.

    Alternates gap draws and improvement draws until the clock passes the
    horizon; zero new records within the horizon returns start_record.
    """
    horizon = start_time + delta_t
    clock = start_time
    record = start_record
    t = start_index
    sd = math.sqrt(improvement.residual_variance)
    while True:
        clock += gap.sample_gap(t, rng)
        if clock > horizon:
            return record
        y = improvement.a + improvement.b * regressor(model_form, t) + rng.normal(0.0, sd)
        record = invert(kind, y, record)
        t += 1


def _rng_for(seed: int, series_id: str, n: int) -> np.random.Generator:
    # Stable per-(series, N) stream: parallel evaluation order cannot matter.
    return np.random.default_rng([seed, zlib.crc32(series_id.encode()), n])


def forecast_at(
    series: RecordSeries, n: int, config: HorizonConfig, model_form: ModelForm = ModelForm.POWER_LAW
) -> float:
    """Forecast the record at T_{c,N} + delta_t using records 1..N only."""
    samples = build_design(series, model_form, max_t=n - 1)
    improvement = fit_fixed_effects(samples, model_form)
    gap = fit_gap_model(series, n)
    rng = _rng_for(config.seed, series.series_id, n)
    sims = [
        simulate_trajectory(
            improvement,
            gap,
            start_record=series.values[n - 1],
            start_time=series.timestamps[n - 1],
            start_index=n,
            delta_t=config.delta_t,
            rng=rng,
            kind=series.kind,
            model_form=model_form,
        )
        for _ in range(config.n_simulations)
    ]
    return float(np.median(sims))


def record_at_time(series: RecordSeries, when: float) -> float:
    """Frontier value in force at clock time ``when``."""
    value = None
    for ts, v in series.records:
        if ts <= when:
            value = v
        else:
            break
    if value is None:
        raise ValueError(f"{series.series_id}: no record at or before requested time")
    return value


def evaluate_horizon(
    corpus: Sequence[RecordSeries],
    config: HorizonConfig,
    model_form: ModelForm = ModelForm.POWER_LAW,
) -> BenchmarkReport:
    """Per (series, N) horizon forecasts vs the realized record, paired with
    the no-change baseline.

    Errors are relative to the record at forecast time:
    e = (R_hat - R_actual) / R(T_{c,N}), so the baseline's error equals the
    realized relative improvement over the horizon.  Rows whose horizon
    exceeds the data coverage are excluded and counted.
    """
    if not corpus:
        raise ConfigError("corpus is empty")
    rows: list[tuple[str, int]] = []
    sim_errors: list[float] = []
    base_errors: list[float] = []
    excluded = 0
    for series in corpus:
        last_ts = series.timestamps[-1] if len(series) else -math.inf
        for n in range(config.n_min, config.n_max + 1):
            if len(series) < n:
                break
            t_n = series.timestamps[n - 1]
            if t_n + config.delta_t > last_ts:
                excluded += 1
                continue
            r_n = series.values[n - 1]
            actual = record_at_time(series, t_n + config.delta_t)
            forecast = forecast_at(series, n, config, model_form)
            rows.append((series.series_id, n))
            sim_errors.append((forecast - actual) / r_n)
            base_errors.append((r_n - actual) / r_n)
    if not rows:
        raise ConfigError("no (series, N) rows with ground truth inside data coverage")
    errors = {
        "simulation": np.asarray(sim_errors),
        "baseline": np.asarray(base_errors),
    }
    return BenchmarkReport(
        kind=corpus[0].kind,
        rows=tuple(rows),
        errors=errors,
        summaries={m: _summarize(e) for m, e in errors.items()},
        fallback_rows={m: () for m in errors},
        excluded_rows=excluded,
    )
