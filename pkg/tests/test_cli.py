import json
import threading
from http.server import HTTPServer
from pathlib import Path

import numpy as np
import pytest

from recordlaw.cli import emit_plot_data, main, parse_duration
from recordlaw.ingest import RecordSeries, SeriesKind, load_csv

from .conftest import make_speedrun_corpus
from .test_api_client import _StubHandler

DATA_DIR = Path(__file__).parent / "data"
FIXTURE = DATA_DIR / "speedrun_fixture.csv"
GOLDEN_REPORT = DATA_DIR / "golden_report.json"


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert "recordlaw" in capsys.readouterr().out


def test_no_subcommand_is_usage_error():
    assert main([]) == 2


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["validate", "--bogus"])
    assert exc.value.code == 2


def test_benchmark_missing_data_exits_2(tmp_path, capsys):
    assert main(["benchmark", "--protocol", "speedrun-K10", "--out", str(tmp_path / "r.json")]) == 2
    assert "--data" in capsys.readouterr().err


def test_validate_good_and_bad(tmp_path, capsys):
    assert main(["validate", str(FIXTURE)]) == 0
    assert "OK" in capsys.readouterr().out
    bad = tmp_path / "bad.csv"
    bad.write_text(
        "series_id,kind,metric_name,timestamp_utc,value\n"
        "a,speedrun,,2020-01-01T00:00:00Z,10\n"
        "a,speedrun,,2020-01-02T00:00:00Z,10\n"
    )
    assert main(["validate", str(bad)]) == 1
    assert "row 3" in capsys.readouterr().err


def test_parse_duration():
    assert parse_duration("8w") == 8 * 7 * 86400.0
    assert parse_duration("2d") == 2 * 86400.0
    assert parse_duration("12h") == 12 * 3600.0
    assert parse_duration("90s") == 90.0
    assert parse_duration("3600") == 3600.0
    from recordlaw.errors import ConfigError

    with pytest.raises(ConfigError):
        parse_duration("8 fortnights")


def test_benchmark_reproduces_golden_report(tmp_path):
    """End-to-end pipeline on the committed fixture matches the committed
    report numerically."""
    out = tmp_path / "report.json"
    rc = main([
        "benchmark", "--data", str(FIXTURE), "--protocol", "speedrun-K10",
        "--models", "zero,fixed,ema,re", "--resamples", "2000", "--seed", "7",
        "--out", str(out),
    ])
    assert rc == 0
    got = json.loads(out.read_text())
    golden = json.loads(GOLDEN_REPORT.read_text())
    assert got["n_rows"] == golden["n_rows"] == 240
    assert got["rows"] == golden["rows"]
    assert got["p_values"] == golden["p_values"]
    for model, summary in golden["summaries"].items():
        for metric, value in summary.items():
            assert got["summaries"][model][metric] == pytest.approx(value, rel=1e-9)
    for model, errors in golden["errors"].items():
        assert got["errors"][model] == pytest.approx(errors, rel=1e-9)


def test_manifest_round_trip_reproduces_bytes(tmp_path):
    out1 = tmp_path / "report1.json"
    args = [
        "benchmark", "--data", str(FIXTURE), "--protocol", "speedrun-K10",
        "--models", "zero,re", "--resamples", "1000", "--seed", "3", "--out", str(out1),
    ]
    assert main(args) == 0
    manifest_path = tmp_path / "report1.json.manifest.json"
    manifest = json.loads(manifest_path.read_text())
    assert manifest["subcommand"] == "benchmark"
    assert str(FIXTURE) in manifest["inputs"]
    assert manifest["config"]["seed"] == 3

    # re-run purely from the manifest: byte-identical output
    out2 = tmp_path / "report2.json"
    rc = main(["benchmark", "--config", str(manifest_path), "--out", str(out2)])
    assert rc == 0
    assert out2.read_bytes() == out1.read_bytes()


def test_config_file_with_flag_override(tmp_path):
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({
        "data": str(FIXTURE), "protocol": "speedrun-K10", "models": "zero,re",
        "resamples": 1000, "seed": 3,
    }))
    out_a = tmp_path / "a.json"
    out_b = tmp_path / "b.json"
    assert main(["benchmark", "--config", str(config), "--out", str(out_a)]) == 0
    # a flag overrides the config value
    assert main(["benchmark", "--config", str(config), "--seed", "4", "--out", str(out_b)]) == 0
    ma = json.loads((tmp_path / "a.json.manifest.json").read_text())
    mb = json.loads((tmp_path / "b.json.manifest.json").read_text())
    assert ma["config"]["seed"] == 3 and mb["config"]["seed"] == 4


def test_config_file_toml(tmp_path):
    config = tmp_path / "cfg.toml"
    config.write_text(f'data = "{FIXTURE}"\nmodel = "power_law"\nmax_t = 9\nout = "IGNORED"\n')
    out = tmp_path / "design.csv"
    assert main(["transform", "--config", str(config), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "series_id,t,response,regressor"
    assert len(lines) == 1 + 12 * 9  # 12 series, pairs t<=9


def test_fit_cli_writes_fit_json(tmp_path):
    out = tmp_path / "fit.json"
    rc = main(["fit", "--data", str(FIXTURE), "--model", "power_law", "--max-t", "9",
               "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["format_version"] == 1
    assert doc["n_groups"] == 12 and doc["n_obs"] == 12 * 9
    assert doc["converged"] is True
    assert doc["spec"]["mask"]["fix_cov"] is True  # speedrun auto mask
    assert -3.0 < doc["mean_alpha"] < -1.0 and -2.0 < doc["mean_beta"] < -0.5


def test_baseline_cli_predictions(tmp_path):
    out = tmp_path / "preds.csv"
    rc = main(["baseline", "--data", str(FIXTURE), "--model", "zero",
               "--protocol", "speedrun-K10", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "series_id,t,predicted_next_value"
    assert len(lines) == 1 + 240
    corpus = {s.series_id: s for s in load_csv(FIXTURE)}
    first = lines[1].split(",")
    assert float(first[2]) == corpus[first[0]].values[int(first[1]) - 1]


def test_forecast_cli(tmp_path):
    out = tmp_path / "horizon.json"
    rc = main(["forecast", "--data", str(FIXTURE), "--delta-t", "2w", "--n-min", "15",
               "--n-max", "20", "--sims", "1", "--seed", "1", "--resamples", "1000",
               "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert set(doc["errors"]) == {"simulation", "baseline"}
    assert "simulation_vs_baseline" in doc["p_values"]


def test_simulate_cli_asymptotics(tmp_path):
    out = tmp_path / "asym.csv"
    rc = main(["simulate", "--experiment", "asymptotics", "--runs", "5", "--seed", "2",
               "--out", str(out)])
    assert rc == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "alpha,beta,log_record_closed_form,log_record_ode,rel_err"
    assert len(rows) == 6
    for row in rows[1:]:
        assert float(row.split(",")[-1]) < 1e-6


def test_simulate_cli_record_times(tmp_path):
    out = tmp_path / "rt.csv"
    rc = main(["simulate", "--experiment", "record-times", "--runs", "500", "--i-max", "10",
               "--seed", "0", "--max-attempts", "1e30", "--out", str(out)])
    assert rc == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 11
    final = rows[-1].split(",")
    assert 0.8 < float(final[1]) < 1.2


def test_simulate_cli_gumbel(tmp_path):
    out = tmp_path / "g.csv"
    rc = main(["simulate", "--experiment", "gumbel", "--runs", "1", "--seed", "0",
               "--alpha", "-1.0", "--n-series", "10", "--series-length", "40",
               "--out", str(out)])
    assert rc == 0
    rows = out.read_text().splitlines()
    seed, alpha_hat, beta_hat, degenerate = rows[1].split(",")
    assert degenerate == "0"
    assert -1.5 < float(beta_hat) < -0.5


def test_report_series_and_scatter(tmp_path):
    out = tmp_path / "series.csv"
    assert main(["report", "--plot", "series", "--data", str(FIXTURE), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "series_id,timestamp_utc,value"
    assert len(lines) == 1 + 12 * 30

    scatter_out = tmp_path / "scatter.csv"
    rc = main(["report", "--plot", "error_scatter", "--report", str(GOLDEN_REPORT),
               "--models", "zero,re", "--out", str(scatter_out)])
    assert rc == 0
    lines = scatter_out.read_text().splitlines()
    assert lines[0] == "series_id,t,abs_error_zero,abs_error_re"
    assert len(lines) == 1 + 240


def test_mean_loglog_identical_categories_zero_band(tmp_path):
    values = [1000.0 * 0.9**i for i in range(12)]
    records = tuple((float(86400 * i), v) for i, v in enumerate(values))
    corpus = [
        RecordSeries("twin_a", SeriesKind.SPEEDRUN, records),
        RecordSeries("twin_b", SeriesKind.SPEEDRUN, records),
    ]
    header, rows = emit_plot_data(corpus, "mean_loglog")
    assert header == ("t", "log_t", "mean_response", "sd_response", "n_series")
    for row in rows:
        assert row[3] == pytest.approx(0.0, abs=1e-15)
        assert row[4] == 2


def test_mean_loglog_linear_trend_on_full_corpus(rng):
    """Aggregated double-log means follow a clearly linear trend in log t."""
    corpus = make_speedrun_corpus(rng, n_series=25, length=50, sigma2=1.0)
    _, rows = emit_plot_data(corpus, "mean_loglog")
    log_t = np.array([r[1] for r in rows])
    mean_y = np.array([r[2] for r in rows])
    X = np.column_stack([np.ones_like(log_t), log_t])
    coef, *_ = np.linalg.lstsq(X, mean_y, rcond=None)
    resid = mean_y - X @ coef
    r2 = 1.0 - resid @ resid / np.sum((mean_y - mean_y.mean()) ** 2)
    assert r2 > 0.9


def test_fetch_cli_with_env_override(tmp_path, monkeypatch):
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        monkeypatch.setenv("RECORDLAW_API_BASE", f"http://127.0.0.1:{server.server_port}")
        games = tmp_path / "games.txt"
        games.write_text("g1\n")
        out = tmp_path / "fetched.csv"
        rc = main(["fetch", "--games", str(games), "--out", str(out),
                   "--rate-limit", "10000", "--min-records", "2"])
        assert rc == 0
        corpus = load_csv(out)
        assert [s.series_id for s in corpus] == ["g1/c1"]
        assert corpus[0].values == (100.0, 98.0, 95.0)
    finally:
        server.shutdown()


def test_fetch_cli_requires_base_url(tmp_path, monkeypatch):
    monkeypatch.delenv("RECORDLAW_API_BASE", raising=False)
    games = tmp_path / "games.txt"
    games.write_text("g1\n")
    assert main(["fetch", "--games", str(games), "--out", str(tmp_path / "o.csv")]) == 2


def test_subcommands_do_not_mutate_inputs(tmp_path):
    data = FIXTURE.read_bytes()
    out = tmp_path / "r.json"
    main(["benchmark", "--data", str(FIXTURE), "--protocol", "speedrun-K10",
          "--models", "zero", "--resamples", "1000", "--seed", "0", "--out", str(out)])
    assert FIXTURE.read_bytes() == data
