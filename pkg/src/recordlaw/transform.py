"""Regression-space transforms for record improvements and their inverses.

Speedrun pairs map through a double logarithm of the record ratio; ml error
rates map through the log of the log-odds (logit) gap.  Both responses are
modeled as Gaussian, so the inverses also carry forecast medians/quantiles
back to raw record values.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .ingest import RecordSeries, SeriesKind


class ModelForm(str, enum.Enum):
    POWER_LAW = "power_law"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class ImprovementSample:
    """One regression row: group id, 1-based index of the earlier record,
    transformed response, and regressor (log t or t)."""

    series_id: str
    t: int
    response: float
    regressor: float

    def __post_init__(self):
        if self.t < 1:
            raise ValueError(f"record index must be >= 1, got {self.t}")
        if not math.isfinite(self.response):
            raise ValueError(f"non-finite response for {self.series_id} at t={self.t}")


def speedrun_response(r_t, r_next):
    """log log(r_t / r_next) for a strictly improving positive record pair."""
    r_t = np.asarray(r_t, dtype=float)
    r_next = np.asarray(r_next, dtype=float)
    if np.any(r_t <= 0) or np.any(r_next <= 0):
        raise DomainError("speedrun records must be > 0")
    if np.any(r_next >= r_t):
        raise DomainError("no improvement: r_next must be < r_t")
    out = np.log(np.log(r_t / r_next))
    return float(out) if out.ndim == 0 else out


def logit(p):
    p = np.asarray(p, dtype=float)
    out = np.log(p) - np.log1p(-p)
    return float(out) if out.ndim == 0 else out


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return float(out) if out.ndim == 0 else out


def ml_response(r_t, r_next):
    """log(logit(r_t) - logit(r_next)) for error rates 0 < r_next < r_t < 1."""
    r_t = np.asarray(r_t, dtype=float)
    r_next = np.asarray(r_next, dtype=float)
    if np.any(r_t <= 0) or np.any(r_t >= 1) or np.any(r_next <= 0) or np.any(r_next >= 1):
        raise DomainError("ml error rates must lie in (0, 1)")
    if np.any(r_next >= r_t):
        raise DomainError("no improvement: r_next must be < r_t")
    out = np.log(logit(r_t) - logit(r_next))
    return float(out) if out.ndim == 0 else out


def invert_speedrun(y, r_t):
    """Next record implied by response y from record r_t: r_t * exp(-exp(y))."""
    y = np.asarray(y, dtype=float)
    out = np.asarray(r_t, dtype=float) * np.exp(-np.exp(y))
    return float(out) if out.ndim == 0 else out


def invert_ml(y, r_t):
    """Next error rate implied by response y: sigmoid(logit(r_t) - exp(y))."""
    y = np.asarray(y, dtype=float)
    r_t = np.asarray(r_t, dtype=float)
    return sigmoid(np.log(r_t) - np.log1p(-r_t) - np.exp(y))


def response(kind: SeriesKind, r_t, r_next):
    if kind is SeriesKind.SPEEDRUN:
        return speedrun_response(r_t, r_next)
    return ml_response(r_t, r_next)


def invert(kind: SeriesKind, y, r_t):
    if kind is SeriesKind.SPEEDRUN:
        return invert_speedrun(y, r_t)
    return invert_ml(y, r_t)


def regressor(form: ModelForm, t):
    """log t for power-law decay, t itself for exponential decay."""
    t = np.asarray(t, dtype=float)
    out = np.log(t) if form is ModelForm.POWER_LAW else t
    return float(out) if out.ndim == 0 else out


def build_design(
    series: RecordSeries,
    model_form: ModelForm,
    max_t: int | None = None,
) -> list[ImprovementSample]:
    """One sample per consecutive record pair (R_t, R_{t+1}) with t <= max_t.

    t is the 1-based index of the earlier record, so a series cut to its
    first K records contributes the K-1 pairs t = 1..K-1.
    """
    if len(series) < 2:
        raise ValueError(f"{series.series_id}: need >= 2 records to build a design")
    n_pairs = len(series) - 1
    if max_t is not None:
        n_pairs = min(n_pairs, max_t)
    samples = []
    values = series.values
    for t in range(1, n_pairs + 1):
        samples.append(
            ImprovementSample(
                series_id=series.series_id,
                t=t,
                response=response(series.kind, values[t - 1], values[t]),
                regressor=regressor(model_form, t),
            )
        )
    return samples
