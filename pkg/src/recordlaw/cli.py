"""Unified command-line entry point.

Subcommands wire ingest -> transform -> fit -> benchmark -> forecast ->
simulate, emit all numeric outputs as CSV/JSON (never logs), and write a
``<out>.manifest.json`` capturing tool version, resolved configuration,
seed, and input digests so any run can be reproduced byte-for-byte by
passing the manifest back via ``--config``.

Exit codes: 0 success, 1 domain/data error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, RecordLawError
from .ingest import (
    CorpusFilter,
    SeriesKind,
    apply_filter,
    format_rfc3339_utc,
    load_csv,
    write_csv,
)
from .transform import ModelForm, build_design

API_BASE_ENV = "RECORDLAW_API_BASE"

UNITS_SECONDS = {"s": 1.0, "h": 3600.0, "d": 86400.0, "w": 7 * 86400.0}


def parse_duration(text: str) -> float:
    """Durations like '8w', '56d', '12h', '3600s', or bare seconds."""
    text = str(text).strip()
    unit = text[-1].lower() if text and text[-1].isalpha() else None
    try:
        if unit is None:
            return float(text)
        return float(text[:-1]) * UNITS_SECONDS[unit]
    except (ValueError, KeyError):
        raise ConfigError(f"cannot parse duration {text!r} (use e.g. 8w, 56d, 12h, 3600s)") from None


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_json(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_manifest(subcommand: str, config: dict, inputs: list, outputs: list) -> None:
    manifest = {
        "tool": "recordlaw",
        "tool_version": __version__,
        "subcommand": subcommand,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }
    out = Path(outputs[0])
    _write_json(manifest, out.with_name(out.name + ".manifest.json"))


def _load_config_file(path) -> dict:
    """Config values from a TOML or JSON file; manifests are accepted and
    contribute their ``config`` section."""
    raw = Path(path).read_bytes()
    if str(path).endswith(".toml"):
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        doc = tomllib.loads(raw.decode("utf-8"))
    else:
        doc = json.loads(raw.decode("utf-8"))
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a table/object")
    if "config" in doc and isinstance(doc["config"], dict):
        doc = doc["config"]
    return doc


class _Resolver:
    """Merge flag values over config-file values over built-in defaults."""

    def __init__(self, args: argparse.Namespace):
        self.args = vars(args)
        self.config = _load_config_file(args.config) if self.args.get("config") else {}
        self.resolved: dict = {}

    def get(self, key: str, default=None, required: bool = False):
        value = self.args.get(key)
        if value is None:
            value = self.config.get(key, default)
        if value is None and required:
            raise ConfigError(f"missing required option --{key.replace('_', '-')}")
        self.resolved[key] = value
        return value


def _corpus_kind(corpus) -> SeriesKind:
    kinds = {s.kind for s in corpus}
    if len(kinds) != 1:
        raise ConfigError(f"corpus mixes kinds {sorted(k.value for k in kinds)}")
    return next(iter(kinds))


def _parse_mask(text: str | None, kind: SeriesKind):
    from .mixed_model import CovarianceMask, default_spec

    if text is None or text == "auto":
        return default_spec(kind).mask
    if text == "none":
        return CovarianceMask()
    flags = {f.strip() for f in text.split(",") if f.strip()}
    known = {"fix_var_alpha", "fix_var_beta", "fix_cov"}
    unknown = flags - known
    if unknown:
        raise ConfigError(f"unknown mask flag(s) {sorted(unknown)}; known: {sorted(known)}")
    return CovarianceMask(**{f: True for f in flags})


# ---------------------------------------------------------------------------
# plot-ready data emission
# ---------------------------------------------------------------------------


def emit_plot_data(source, plot_kind: str, models=None):
    """(header, rows) for one of the supported plot kinds.

    series: raw (series_id, timestamp, value) rows of a corpus.
    mean_loglog: per-index mean and standard-deviation band of the
        transformed responses across all series of a corpus.
    error_scatter: paired absolute errors of two models from a report.
    """
    if plot_kind == "series":
        header = ("series_id", "timestamp_utc", "value")
        rows = [
            (s.series_id, format_rfc3339_utc(ts), repr(v))
            for s in source
            for ts, v in s.records
        ]
        return header, rows
    if plot_kind == "mean_loglog":
        per_t: dict[int, list[float]] = {}
        for series in source:
            for sample in build_design(series, ModelForm.POWER_LAW):
                per_t.setdefault(sample.t, []).append(sample.response)
        header = ("t", "log_t", "mean_response", "sd_response", "n_series")
        rows = []
        for t in sorted(per_t):
            ys = np.asarray(per_t[t])
            sd = float(ys.std(ddof=1)) if len(ys) > 1 else 0.0
            rows.append((t, float(np.log(t)), float(ys.mean()), sd, len(ys)))
        return header, rows
    if plot_kind == "error_scatter":
        from .bench import error_scatter

        model_a, model_b = models
        scatter = error_scatter(source, model_a, model_b)
        header = ("series_id", "t", f"abs_error_{model_a}", f"abs_error_{model_b}")
        rows = [
            (sid, t, float(ea), float(eb))
            for (sid, t), (ea, eb) in zip(source.rows, scatter.pairs)
        ]
        return header, rows
    raise ConfigError(f"unknown plot kind {plot_kind!r}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_fetch(args) -> int:
    from .api_client import fetch_speedrun_series

    r = _Resolver(args)
    games_path = r.get("games", required=True)
    out = r.get("out", required=True)
    rate_limit = float(r.get("rate_limit", 5.0))
    api_base = r.get("api_base") or os.environ.get(API_BASE_ENV)
    if not api_base:
        raise ConfigError(f"no API base URL: pass --api-base or set {API_BASE_ENV}")
    max_games = r.get("max_games")
    min_records = int(r.get("min_records", 2))

    games = [line.strip() for line in Path(games_path).read_text().splitlines() if line.strip()]
    if max_games is not None:
        games = games[: int(max_games)]
    corpus = fetch_speedrun_series(games, api_base, rate_limit)
    corpus = apply_filter(corpus, CorpusFilter(min_records=max(min_records, 2)))
    write_csv(corpus, out)
    _write_manifest("fetch", r.resolved, [games_path], [out])
    print(f"fetched {len(corpus)} series, {sum(len(s) for s in corpus)} records -> {out}")
    return 0


def _cmd_validate(args) -> int:
    corpus = load_csv(args.data)
    n_records = sum(len(s) for s in corpus)
    print(f"{args.data}: OK ({len(corpus)} series, {n_records} records)")
    return 0


def _cmd_transform(args) -> int:
    r = _Resolver(args)
    data = r.get("data", required=True)
    out = r.get("out", required=True)
    form = ModelForm(r.get("model", "power_law"))
    max_t = r.get("max_t")
    corpus = load_csv(data)
    header = ("series_id", "t", "response", "regressor")
    rows = []
    for series in corpus:
        if len(series) < 2:
            continue
        for s in build_design(series, form, max_t=int(max_t) if max_t is not None else None):
            rows.append((s.series_id, s.t, repr(s.response), repr(s.regressor)))
    _write_csv_rows(out, header, rows)
    _write_manifest("transform", r.resolved, [data], [out])
    print(f"wrote {len(rows)} design rows -> {out}")
    return 0


def _cmd_fit(args) -> int:
    from .mixed_model import MixedModelSpec, fit, fit_to_dict

    r = _Resolver(args)
    data = r.get("data", required=True)
    out = r.get("out", required=True)
    form = ModelForm(r.get("model", "power_law"))
    max_t = r.get("max_t")
    corpus = load_csv(data)
    kind = _corpus_kind(corpus)
    mask = _parse_mask(r.get("mask", "auto"), kind)
    floor = float(r.get("variance_floor", 1e-6))
    samples = []
    for series in corpus:
        if len(series) >= 2:
            samples.extend(build_design(series, form, max_t=int(max_t) if max_t is not None else None))
    result = fit(samples, MixedModelSpec(model_form=form, mask=mask, variance_floor=floor))
    _write_json(fit_to_dict(result), out)
    _write_manifest("fit", r.resolved, [data], [out])
    print(
        f"fit {result.n_obs} rows / {result.n_groups} groups: "
        f"mean_alpha={result.mean_alpha:.4f} mean_beta={result.mean_beta:.4f} "
        f"scale={result.scale:.4f} loglik={result.loglik:.4f} converged={result.converged}"
    )
    return 0


def _protocol_from_string(text: str, kind: SeriesKind, models, seed: int, decay):
    from .bench import BenchProtocol

    if text == "ml-lastout":
        return BenchProtocol(kind=kind, leave_last_out=True, models=models, seed=seed, ema_decay=decay)
    if text.startswith("speedrun-K"):
        try:
            k = int(text.removeprefix("speedrun-K"))
        except ValueError:
            raise ConfigError(f"cannot parse cutoff in protocol {text!r}") from None
        return BenchProtocol(kind=kind, cutoff_k=k, models=models, seed=seed, ema_decay=decay)
    raise ConfigError(f"unknown protocol {text!r} (use speedrun-K<k> or ml-lastout)")


def _cmd_baseline(args) -> int:
    from .baselines import ema_predict, fit_fixed_effects, zero_baseline
    from .bench import _protocol_rows
    from .errors import InsufficientDataError
    from .transform import invert, regressor

    r = _Resolver(args)
    data = r.get("data", required=True)
    out = r.get("out", required=True)
    model = r.get("model", required=True)
    if model not in ("zero", "fixed", "ema"):
        raise ConfigError(f"unknown baseline model {model!r}")
    decay = r.get("decay")
    corpus = load_csv(data)
    kind = _corpus_kind(corpus)
    protocol = _protocol_from_string(
        r.get("protocol", "speedrun-K10" if kind is SeriesKind.SPEEDRUN else "ml-lastout"),
        kind, (model,), int(r.get("seed", 0)), float(decay) if decay is not None else None,
    )
    designs = {s.series_id: build_design(s, protocol.model_form) for s in corpus if len(s) >= 2}
    header = ("series_id", "t", "predicted_next_value")
    rows = []
    for row in _protocol_rows(corpus, protocol):
        if model == "zero":
            # zero predicted improvement: next value equals the current record
            predicted = row.r_t * (1.0 - zero_baseline(row.series_id, row.t))
        else:
            history = [s for s in designs[row.series_id] if s.t < row.t]
            try:
                if model == "fixed":
                    fe = fit_fixed_effects(history, protocol.model_form)
                    eta = fe.a + fe.b * regressor(protocol.model_form, row.t)
                else:
                    if decay is None:
                        raise ConfigError("ema baseline needs --decay")
                    eta = ema_predict([s.response for s in history], float(decay))
                predicted = invert(kind, eta, row.r_t)
            except InsufficientDataError:
                predicted = row.r_t
        rows.append((row.series_id, row.t, repr(float(predicted))))
    _write_csv_rows(out, header, rows)
    _write_manifest("baseline", r.resolved, [data], [out])
    print(f"wrote {len(rows)} predictions -> {out}")
    return 0


def _cmd_benchmark(args) -> int:
    from .bench import paired_bootstrap, run_benchmark

    r = _Resolver(args)
    data = r.get("data", required=True)
    out = r.get("out", required=True)
    models = tuple(m.strip() for m in str(r.get("models", "zero,fixed,ema,re")).split(",") if m.strip())
    seed = int(r.get("seed", 0))
    resamples = int(r.get("resamples", 10_000))
    decay = r.get("decay")
    corpus = load_csv(data)
    kind = _corpus_kind(corpus)
    protocol = _protocol_from_string(
        r.get("protocol", required=True), kind, models, seed,
        float(decay) if decay is not None else None,
    )
    report = run_benchmark(corpus, protocol)
    for i, model_a in enumerate(models):
        for model_b in models[i + 1:]:
            paired_bootstrap(report, model_a, model_b, n_resamples=resamples, seed=seed)
    _write_json(report.to_dict(), out)
    _write_manifest("benchmark", r.resolved, [data], [out])
    for model in models:
        s = report.summaries[model]
        print(f"{model}: mean_l2={s['mean_l2_pct']:.3f}% mean_l1={s['mean_l1_pct']:.3f}%")
    for pair, p in sorted(report.p_values.items()):
        print(f"bootstrap {pair}: p={p:.6g}")
    return 0


def _cmd_forecast(args) -> int:
    from .bench import paired_bootstrap
    from .horizon import HorizonConfig, evaluate_horizon

    r = _Resolver(args)
    data = r.get("data", required=True)
    out = r.get("out", required=True)
    config = HorizonConfig(
        delta_t=parse_duration(r.get("delta_t", "8w")),
        n_min=int(r.get("n_min", 15)),
        n_max=int(r.get("n_max", 45)),
        n_simulations=int(r.get("sims", 1)),
        seed=int(r.get("seed", 0)),
    )
    corpus = load_csv(data)
    report = evaluate_horizon(corpus, config)
    paired_bootstrap(report, "simulation", "baseline",
                     n_resamples=int(r.get("resamples", 10_000)), seed=config.seed)
    _write_json(report.to_dict(), out)
    _write_manifest("forecast", r.resolved, [data], [out])
    for model in ("simulation", "baseline"):
        print(f"{model}: mean_l2={report.summaries[model]['mean_l2_pct']:.3f}%")
    print(f"rows={report.n_rows} excluded={report.excluded_rows} "
          f"p(simulation_vs_baseline)={report.p_values['simulation_vs_baseline']:.6g}")
    return 0


def _cmd_simulate(args) -> int:
    r = _Resolver(args)
    experiment = r.get("experiment", required=True)
    out = r.get("out", required=True)
    seed = int(r.get("seed", 0))
    if experiment == "record-times":
        from .theory import record_time_growth

        growth = record_time_growth(
            n_runs=int(r.get("runs", 10_000)),
            i_max=int(r.get("i_max", 20)),
            seed=seed,
            max_attempts=float(r.get("max_attempts", 1e12)),
        )
        header = ("i", "mean_log_over_i", "se_log_over_i", "var_log", "n_censored")
        rows = [
            (int(i), repr(float(m)), repr(float(se)), repr(float(v)), int(c))
            for i, m, se, v, c in zip(
                growth.i, growth.mean_log_over_i, growth.se_log_over_i,
                growth.var_log, growth.n_censored,
            )
        ]
    elif experiment == "gumbel":
        from .theory import gumbel_consistency_check

        runs = int(r.get("runs", 10))
        header = ("seed", "fitted_alpha", "fitted_beta", "degenerate")
        rows = []
        for k in range(runs):
            res = gumbel_consistency_check(
                alpha=float(r.get("alpha", 0.0)),
                n_series=int(r.get("n_series", 25)),
                series_length=int(r.get("series_length", 50)),
                seed=seed + k,
            )
            rows.append(
                (seed + k,
                 "" if res.fitted_alpha is None else repr(res.fitted_alpha),
                 "" if res.fitted_beta is None else repr(res.fitted_beta),
                 int(res.degenerate))
            )
    elif experiment == "asymptotics":
        from .theory import PowerLawParams, log_record_at, ode_log_record

        rng = np.random.default_rng(seed)
        runs = int(r.get("runs", 50))
        t_end = float(r.get("t_end", 1e6))
        header = ("alpha", "beta", "log_record_closed_form", "log_record_ode", "rel_err")
        rows = []
        for _ in range(runs):
            p = PowerLawParams(
                alpha=float(rng.uniform(-3.0, 0.0)),
                beta=float(rng.uniform(-3.0, -1.05)),
                r1=100.0,
            )
            closed = log_record_at(p, t_end)
            ode = ode_log_record(p, t_end)
            rel = abs(closed - ode) / max(abs(closed), 1e-12)
            rows.append((repr(p.alpha), repr(p.beta), repr(closed), repr(ode), repr(rel)))
    else:
        raise ConfigError(f"unknown experiment {experiment!r}")
    _write_csv_rows(out, header, rows)
    _write_manifest("simulate", r.resolved, [], [out])
    print(f"wrote {len(rows)} rows -> {out}")
    return 0


def _cmd_report(args) -> int:
    r = _Resolver(args)
    plot = r.get("plot", required=True)
    out = r.get("out", required=True)
    inputs = []
    if plot in ("series", "mean_loglog"):
        data = r.get("data", required=True)
        inputs.append(data)
        source = load_csv(data)
        header, rows = emit_plot_data(source, plot)
    elif plot == "error_scatter":
        from .bench import BenchmarkReport, error_scatter

        report_path = r.get("report", required=True)
        inputs.append(report_path)
        report = BenchmarkReport.from_dict(json.loads(Path(report_path).read_text()))
        models = tuple(m.strip() for m in str(r.get("models", required=True)).split(","))
        if len(models) != 2:
            raise ConfigError("error_scatter needs exactly two models, e.g. --models re,zero")
        header, rows = emit_plot_data(report, plot, models=models)
        frac = error_scatter(report, *models).fraction_below_diagonal
        print(f"fraction of rows where {models[1]} beats {models[0]}: {frac:.4f}")
    else:
        raise ConfigError(f"unknown plot kind {plot!r}")
    _write_csv_rows(out, header, rows)
    _write_manifest("report", r.resolved, inputs, [out])
    print(f"wrote {len(rows)} rows -> {out}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recordlaw",
        description="Forecasting toolkit for monotone record progressions.",
    )
    parser.add_argument("--version", action="version", version=f"recordlaw {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="<subcommand>")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="TOML/JSON config file (or a run manifest); flags override it")
        return p

    p = add("fetch", _cmd_fetch, "fetch speedrun record series from a leaderboard API")
    p.add_argument("--games", help="file with one ranked game id per line")
    p.add_argument("--out", help="output corpus CSV")
    p.add_argument("--rate-limit", dest="rate_limit", type=float, help="requests per second")
    p.add_argument("--api-base", dest="api_base", help=f"API base URL (or ${API_BASE_ENV})")
    p.add_argument("--max-games", dest="max_games", type=int, help="popularity rank cutoff")
    p.add_argument("--min-records", dest="min_records", type=int, help="corpus filter")

    p = sub.add_parser("validate", help="check a corpus CSV against the schema")
    p.set_defaults(func=_cmd_validate)
    p.add_argument("data", help="corpus CSV path")

    p = add("transform", _cmd_transform, "emit regression design rows for a corpus")
    p.add_argument("--data")
    p.add_argument("--model", choices=[f.value for f in ModelForm])
    p.add_argument("--max-t", dest="max_t", type=int)
    p.add_argument("--out")

    p = add("fit", _cmd_fit, "fit the random-effects improvement model")
    p.add_argument("--data")
    p.add_argument("--model", choices=[f.value for f in ModelForm])
    p.add_argument("--max-t", dest="max_t", type=int, help="use pairs with index <= max-t")
    p.add_argument("--mask", help="auto | none | comma list of fix_var_alpha,fix_var_beta,fix_cov")
    p.add_argument("--variance-floor", dest="variance_floor", type=float)
    p.add_argument("--out", help="fit JSON path")

    p = add("baseline", _cmd_baseline, "emit per-row baseline predictions")
    p.add_argument("--data")
    p.add_argument("--model", choices=["zero", "fixed", "ema"])
    p.add_argument("--decay", type=float, help="EMA decay in (0, 1]")
    p.add_argument("--protocol", help="speedrun-K<k> or ml-lastout")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = add("benchmark", _cmd_benchmark, "run the out-of-sample benchmark protocol")
    p.add_argument("--data")
    p.add_argument("--protocol", help="speedrun-K<k> or ml-lastout")
    p.add_argument("--models", help="comma list: zero,fixed,ema,re,re_exponential,re_popmean")
    p.add_argument("--resamples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--decay", type=float, help="fix the EMA decay instead of ex-post tuning")
    p.add_argument("--out", help="report JSON path")

    p = add("forecast", _cmd_forecast, "horizon forecasts vs the no-change baseline")
    p.add_argument("--data")
    p.add_argument("--delta-t", dest="delta_t", help="horizon, e.g. 8w")
    p.add_argument("--n-min", dest="n_min", type=int)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--sims", type=int, help="simulations per (series, N), median-aggregated")
    p.add_argument("--seed", type=int)
    p.add_argument("--resamples", type=int)
    p.add_argument("--out")

    p = add("simulate", _cmd_simulate, "record-process and asymptotics experiments")
    p.add_argument("--experiment", choices=["record-times", "gumbel", "asymptotics"])
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--i-max", dest="i_max", type=int)
    p.add_argument("--max-attempts", dest="max_attempts", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--n-series", dest="n_series", type=int)
    p.add_argument("--series-length", dest="series_length", type=int)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--out")

    p = add("report", _cmd_report, "emit plot-ready CSV data")
    p.add_argument("--plot", choices=["series", "mean_loglog", "error_scatter"])
    p.add_argument("--data", help="corpus CSV (series, mean_loglog)")
    p.add_argument("--report", help="benchmark report JSON (error_scatter)")
    p.add_argument("--models", help="two models for error_scatter, e.g. re,zero")
    p.add_argument("--out")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "subcommand", None):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:  # usage errors: missing/contradictory options
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except RecordLawError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
