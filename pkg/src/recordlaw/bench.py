"""Out-of-sample evaluation protocol, error metrics, cutoff sweeps, and
paired bootstrap significance tests.

Two protocols:

* cutoff: the random-effects model is fit once on the pairs among the first
  K records of every series and predicts every later pair; comparison
  models are refit per prediction step with access to the full history up
  to the predicted record.
* leave-last-out: every model is fit on all pairs but each series' final
  one and predicts that final improvement.

Error spaces: speedrun errors are differences of relative improvements
r = 1 - R_{t+1}/R_t; ml errors are differences of raw error-rate values
(reported in percentage points).  Mean L2 is root-mean-square error.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .baselines import DEFAULT_DECAY_GRID, ema_predict, fit_fixed_effects
from .errors import ConfigError, InsufficientDataError
from .ingest import RecordSeries, SeriesKind
from .mixed_model import MixedModelFit, MixedModelSpec, default_spec, fit as fit_mixed
from .transform import ImprovementSample, ModelForm, build_design, invert, regressor

KNOWN_MODELS = ("zero", "fixed", "ema", "re", "re_exponential", "re_popmean")


@dataclass(frozen=True)
class BenchProtocol:
    """Evaluation protocol: exactly one of cutoff_k / leave_last_out."""

    kind: SeriesKind
    cutoff_k: int | None = None
    leave_last_out: bool = False
    models: tuple[str, ...] = ("zero", "fixed", "ema", "re")
    seed: int = 0
    ema_decay: float | None = None  # None: tuned ex post on the protocol itself
    model_form: ModelForm = ModelForm.POWER_LAW
    spec_override: MixedModelSpec | None = None

    def __post_init__(self):
        has_cutoff = self.cutoff_k is not None
        if has_cutoff == self.leave_last_out:
            raise ConfigError("protocol needs exactly one of cutoff_k / leave_last_out")
        if has_cutoff and self.cutoff_k < 2:
            raise ConfigError(f"cutoff_k must be >= 2, got {self.cutoff_k}")
        unknown = [m for m in self.models if m not in KNOWN_MODELS]
        if unknown:
            raise ConfigError(f"unknown model id(s) {unknown}; known: {list(KNOWN_MODELS)}")


@dataclass
class BenchmarkReport:
    """Paired per-row signed errors for a set of models plus summaries."""

    kind: SeriesKind
    rows: tuple[tuple[str, int], ...]  # (series_id, t of the predicted pair)
    errors: dict[str, np.ndarray]
    summaries: dict[str, dict[str, float]]
    fallback_rows: dict[str, tuple[int, ...]]
    p_values: dict[str, float] = field(default_factory=dict)
    ema_decay: float | None = None
    excluded_rows: int = 0

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "n_rows": self.n_rows,
            "excluded_rows": self.excluded_rows,
            "ema_decay": self.ema_decay,
            "rows": [[sid, t] for sid, t in self.rows],
            "errors": {m: [float(e) for e in errs] for m, errs in sorted(self.errors.items())},
            "summaries": {m: s for m, s in sorted(self.summaries.items())},
            "fallback_rows": {m: list(r) for m, r in sorted(self.fallback_rows.items())},
            "p_values": dict(sorted(self.p_values.items())),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchmarkReport":
        return cls(
            kind=SeriesKind(doc["kind"]),
            rows=tuple((sid, int(t)) for sid, t in doc["rows"]),
            errors={m: np.asarray(e, dtype=float) for m, e in doc["errors"].items()},
            summaries=doc["summaries"],
            fallback_rows={m: tuple(r) for m, r in doc.get("fallback_rows", {}).items()},
            p_values=doc.get("p_values", {}),
            ema_decay=doc.get("ema_decay"),
            excluded_rows=doc.get("excluded_rows", 0),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def mean_l2(errors: np.ndarray) -> float:
    """Root-mean-square error."""
    errors = np.asarray(errors, dtype=float)
    return float(np.sqrt(np.mean(errors**2)))


def mean_l1(errors: np.ndarray) -> float:
    return float(np.mean(np.abs(errors)))


def _summarize(errors: np.ndarray) -> dict[str, float]:
    return {
        "mean_l2": mean_l2(errors),
        "mean_l1": mean_l1(errors),
        "mean_l2_pct": 100.0 * mean_l2(errors),
        "mean_l1_pct": 100.0 * mean_l1(errors),
    }


@dataclass(frozen=True)
class _EvalRow:
    series_id: str
    t: int            # index of the predicted pair (earlier record of the pair)
    r_t: float        # record value at index t
    r_next: float     # realized next record


def _protocol_rows(corpus: Sequence[RecordSeries], protocol: BenchProtocol) -> list[_EvalRow]:
    rows = []
    for series in corpus:
        values = series.values
        if protocol.cutoff_k is not None:
            for t in range(protocol.cutoff_k, len(series)):
                rows.append(_EvalRow(series.series_id, t, values[t - 1], values[t]))
        else:
            if len(series) >= 2:
                t = len(series) - 1
                rows.append(_EvalRow(series.series_id, t, values[t - 1], values[t]))
    return rows


def _training_samples(
    corpus: Sequence[RecordSeries], protocol: BenchProtocol, form: ModelForm
) -> list[ImprovementSample]:
    """Rows the random-effects model may see: the <=K prefix pairs, or all
    pairs but each series' last."""
    samples = []
    for series in corpus:
        if len(series) < 2:
            continue
        if protocol.cutoff_k is not None:
            max_t = protocol.cutoff_k - 1
        else:
            max_t = len(series) - 2
        if max_t >= 1:
            samples.extend(build_design(series, form, max_t=max_t))
    return samples


def _error(kind: SeriesKind, predicted_next: float, row: _EvalRow) -> float:
    if kind is SeriesKind.SPEEDRUN:
        r_hat = 1.0 - predicted_next / row.r_t
        r_actual = 1.0 - row.r_next / row.r_t
        return r_hat - r_actual
    return predicted_next - row.r_next


def _predict_from_eta(kind: SeriesKind, eta: float, r_t: float) -> float:
    return invert(kind, eta, r_t)


def run_benchmark(corpus: Sequence[RecordSeries], protocol: BenchProtocol) -> BenchmarkReport:
    """Score every model on the identical held-out row set."""
    if not corpus:
        raise ConfigError("corpus is empty")
    kinds = {s.kind for s in corpus}
    if kinds != {protocol.kind}:
        raise ConfigError(f"corpus kinds {sorted(k.value for k in kinds)} do not match protocol kind {protocol.kind.value!r}")
    rows = _protocol_rows(corpus, protocol)
    if not rows:
        raise ConfigError("protocol produced no evaluation rows")

    form = protocol.model_form
    designs = {s.series_id: build_design(s, form) for s in corpus if len(s) >= 2}

    fits: dict[str, MixedModelFit] = {}
    for model in protocol.models:
        if model in ("re", "re_popmean") and "re_power" not in fits:
            spec = protocol.spec_override or default_spec(protocol.kind, form)
            fits["re_power"] = fit_mixed(_training_samples(corpus, protocol, form), spec)
        if model == "re_exponential":
            spec = protocol.spec_override or default_spec(protocol.kind, ModelForm.EXPONENTIAL)
            spec = MixedModelSpec(ModelForm.EXPONENTIAL, spec.mask, spec.variance_floor)
            fits["re_exp"] = fit_mixed(
                _training_samples(corpus, protocol, ModelForm.EXPONENTIAL), spec
            )

    ema_decay = protocol.ema_decay
    if "ema" in protocol.models and ema_decay is None:
        ema_decay, _ = _tune_ema(rows, designs, protocol.kind, DEFAULT_DECAY_GRID)

    errors: dict[str, np.ndarray] = {}
    fallbacks: dict[str, tuple[int, ...]] = {}
    for model in protocol.models:
        errs = np.empty(len(rows))
        flagged = []
        for i, row in enumerate(rows):
            if model == "zero":
                errs[i] = _error(protocol.kind, row.r_t, row)
                continue
            if model == "fixed":
                try:
                    fe = fit_fixed_effects(designs[row.series_id], form, up_to_t=row.t)
                    eta = fe.a + fe.b * regressor(form, row.t)
                except InsufficientDataError:
                    flagged.append(i)
                    errs[i] = _error(protocol.kind, row.r_t, row)
                    continue
            elif model == "ema":
                history = [s.response for s in designs[row.series_id] if s.t < row.t]
                if not history:
                    flagged.append(i)
                    errs[i] = _error(protocol.kind, row.r_t, row)
                    continue
                eta = ema_predict(history, ema_decay)
            elif model in ("re", "re_popmean", "re_exponential"):
                fit_key = "re_exp" if model == "re_exponential" else "re_power"
                fit_result = fits[fit_key]
                if model == "re_popmean":
                    a, b = fit_result.mean_alpha, fit_result.mean_beta
                else:
                    # Groups contributing no training rows take the prior mean,
                    # which is exactly their conditional mode.
                    a, b = fit_result.group_effects.get(
                        row.series_id, (fit_result.mean_alpha, fit_result.mean_beta)
                    )
                eta = a + b * regressor(fit_result.spec.model_form, row.t)
            else:  # pragma: no cover - guarded by protocol validation
                raise ConfigError(f"unknown model {model!r}")
            errs[i] = _error(protocol.kind, _predict_from_eta(protocol.kind, eta, row.r_t), row)
        errors[model] = errs
        fallbacks[model] = tuple(flagged)

    summaries = {m: _summarize(e) for m, e in errors.items()}
    return BenchmarkReport(
        kind=protocol.kind,
        rows=tuple((r.series_id, r.t) for r in rows),
        errors=errors,
        summaries=summaries,
        fallback_rows=fallbacks,
        ema_decay=ema_decay,
    )


def _tune_ema(
    rows: Sequence[_EvalRow],
    designs: Mapping[str, Sequence[ImprovementSample]],
    kind: SeriesKind,
    grid: Sequence[float],
) -> tuple[float, float]:
    """Ex-post decay choice: argmin of mean L2 over the evaluation rows."""
    best = (None, math.inf)
    for decay in grid:
        errs = np.empty(len(rows))
        for i, row in enumerate(rows):
            history = [s.response for s in designs[row.series_id] if s.t < row.t]
            if not history:
                errs[i] = _error(kind, row.r_t, row)
                continue
            eta = ema_predict(history, decay)
            errs[i] = _error(kind, _predict_from_eta(kind, eta, row.r_t), row)
        err = mean_l2(errs)
        if err < best[1]:
            best = (decay, err)
    return best


def cutoff_sweep(
    corpus: Sequence[RecordSeries],
    ks: Sequence[int],
    protocol: BenchProtocol | None = None,
) -> dict[int, dict[str, dict[str, float]]]:
    """One benchmark run per cutoff K; the Table-of-cutoffs grid."""
    if protocol is None:
        protocol = BenchProtocol(kind=SeriesKind.SPEEDRUN, cutoff_k=10)
    out = {}
    for k in ks:
        if k < 2:
            raise ConfigError(f"cutoff K must be >= 2, got {k}")
        pk = BenchProtocol(
            kind=protocol.kind,
            cutoff_k=int(k),
            models=protocol.models,
            seed=protocol.seed,
            ema_decay=protocol.ema_decay,
            model_form=protocol.model_form,
            spec_override=protocol.spec_override,
        )
        out[int(k)] = run_benchmark(corpus, pk).summaries
    return out


def paired_bootstrap(
    report: BenchmarkReport,
    model_a: str,
    model_b: str,
    n_resamples: int = 10_000,
    statistic: str = "mean_L2_diff",
    seed: int | None = None,
    chunk: int = 2_000,
) -> float:
    """One-sided paired bootstrap p-value that model_a fails to beat model_b.

    Rows are resampled with replacement, the same rows for both models, so
    correlated example difficulty cancels.  Resample r draws its indices
    from row r of a single Philox(seed) index stream, which keeps results
    identical under any parallel evaluation order.  Ties count half, so a
    model compared against itself yields exactly 0.5.
    """
    if n_resamples < 1000:
        raise ValueError(f"n_resamples must be >= 1000, got {n_resamples}")
    if statistic != "mean_L2_diff":
        raise ValueError(f"unknown statistic {statistic!r}")
    for model in (model_a, model_b):
        if model not in report.errors:
            raise KeyError(f"model {model!r} not in report (has {sorted(report.errors)})")
    ea = np.asarray(report.errors[model_a]) ** 2
    eb = np.asarray(report.errors[model_b]) ** 2
    n = len(ea)
    rng = np.random.Generator(np.random.Philox(seed if seed is not None else 0))
    wins = 0.0
    done = 0
    while done < n_resamples:
        m = min(chunk, n_resamples - done)
        idx = rng.integers(0, n, size=(m, n))
        stat_a = np.sqrt(ea[idx].mean(axis=1))
        stat_b = np.sqrt(eb[idx].mean(axis=1))
        diff = stat_a - stat_b
        wins += np.count_nonzero(diff > 0) + 0.5 * np.count_nonzero(diff == 0)
        done += m
    p = wins / n_resamples
    report.p_values[f"{model_a}_vs_{model_b}"] = p
    return p


@dataclass(frozen=True)
class ErrorScatter:
    pairs: np.ndarray  # (n, 2) of (|error_a|, |error_b|)
    fraction_below_diagonal: float  # share of rows where model_b beats model_a


def error_scatter(report: BenchmarkReport, model_a: str, model_b: str) -> ErrorScatter:
    """Log-scale-ready |error| pairs plus the share below the x = y line."""
    for model in (model_a, model_b):
        if model not in report.errors:
            raise KeyError(f"model {model!r} not in report (has {sorted(report.errors)})")
    abs_a = np.abs(report.errors[model_a])
    abs_b = np.abs(report.errors[model_b])
    below = float(np.mean(abs_b < abs_a))
    return ErrorScatter(pairs=np.column_stack([abs_a, abs_b]), fraction_below_diagonal=below)
