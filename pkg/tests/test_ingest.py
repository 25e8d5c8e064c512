import pytest
from hypothesis import given, strategies as st

from recordlaw.errors import ParseError
from recordlaw.ingest import (
    CorpusFilter,
    RecordSeries,
    SeriesKind,
    apply_filter,
    format_rfc3339_utc,
    load_csv,
    parse_rfc3339_utc,
    record_frontier,
    write_csv,
)


def test_frontier_drops_ties_and_regressions():
    history = [(1.0, 100.0), (2.0, 98.0), (3.0, 99.0), (4.0, 95.0)]
    assert record_frontier(history) == ((1.0, 100.0), (2.0, 98.0), (4.0, 95.0))


def test_frontier_empty():
    assert record_frontier([]) == ()


def test_frontier_same_instant_keeps_better_value():
    assert record_frontier([(1.0, 100.0), (1.0, 90.0)]) == ((1.0, 90.0),)


run_histories = st.lists(
    st.tuples(
        st.integers(min_value=0, max_value=10**6),
        st.floats(min_value=0.1, max_value=1e6, allow_nan=False),
    ),
    max_size=60,
)


@given(run_histories)
def test_frontier_idempotent_and_valid(history):
    frontier = record_frontier(history)
    assert record_frontier(frontier) == frontier
    # every frontier is a valid speedrun RecordSeries
    RecordSeries("x", SeriesKind.SPEEDRUN, frontier)


def test_record_series_invariants():
    with pytest.raises(ValueError, match="strictly increasing"):
        RecordSeries("x", SeriesKind.SPEEDRUN, ((1.0, 10.0), (1.0, 9.0)))
    with pytest.raises(ValueError, match="strictly decreasing"):
        RecordSeries("x", SeriesKind.SPEEDRUN, ((1.0, 10.0), (2.0, 10.0)))
    with pytest.raises(ValueError, match="> 0"):
        RecordSeries("x", SeriesKind.SPEEDRUN, ((1.0, 0.0),))
    with pytest.raises(ValueError, match="in \\(0, 1\\)"):
        RecordSeries("x", SeriesKind.ML_BENCHMARK, ((1.0, 1.0),))
    # empty series are allowed; filters exclude them downstream
    assert len(RecordSeries("x", SeriesKind.SPEEDRUN, ())) == 0


def test_apply_filter_boundary_and_order():
    def series(sid, n):
        recs = tuple((float(i), 1000.0 - i) for i in range(n))
        return RecordSeries(sid, SeriesKind.SPEEDRUN, recs)

    corpus = [series("a", 50), series("b", 49), series("c", 50)]
    kept = apply_filter(corpus, CorpusFilter(min_records=50))
    assert [s.series_id for s in kept] == ["a", "c"]
    assert apply_filter([], CorpusFilter(min_records=2)) == []


def test_apply_filter_metrics():
    recs = ((0.0, 0.5), (1.0, 0.4), (2.0, 0.3))
    corpus = [
        RecordSeries("m1", SeriesKind.ML_BENCHMARK, recs, metric_name="accuracy"),
        RecordSeries("m2", SeriesKind.ML_BENCHMARK, recs, metric_name="f1"),
    ]
    kept = apply_filter(corpus, CorpusFilter(min_records=2, allowed_metrics={"accuracy"}))
    assert [s.series_id for s in kept] == ["m1"]


def test_filter_requires_min_records_ge_2():
    with pytest.raises(ValueError):
        CorpusFilter(min_records=1)


def test_parse_rfc3339_variants():
    assert parse_rfc3339_utc("1970-01-01T00:00:00Z") == 0.0
    assert parse_rfc3339_utc("1970-01-01T00:00:01+00:00") == 1.0
    with pytest.raises(ParseError):
        parse_rfc3339_utc("1970-01-01T00:00:00")  # naive
    with pytest.raises(ParseError):
        parse_rfc3339_utc("1970-01-01T00:00:00+02:00")  # non-UTC
    with pytest.raises(ParseError):
        parse_rfc3339_utc("not-a-time")


def _write_rows(path, rows, header="series_id,kind,metric_name,timestamp_utc,value"):
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")


def test_load_csv_valid(tmp_path):
    p = tmp_path / "c.csv"
    _write_rows(p, [
        "a,speedrun,,2020-01-01T00:00:00Z,100.0",
        "a,speedrun,,2020-01-02T00:00:00Z,95.0",
        "a,speedrun,,2020-01-03T00:00:00Z,90.0",
    ])
    corpus = load_csv(p)
    assert len(corpus) == 1 and len(corpus[0]) == 3
    assert corpus[0].values == (100.0, 95.0, 90.0)


def test_load_csv_tie_names_row(tmp_path):
    p = tmp_path / "c.csv"
    _write_rows(p, [
        "a,speedrun,,2020-01-01T00:00:00Z,100.0",
        "a,speedrun,,2020-01-02T00:00:00Z,100.0",
    ])
    with pytest.raises(ParseError, match="row 3"):
        load_csv(p)


def test_load_csv_missing_column(tmp_path):
    p = tmp_path / "c.csv"
    _write_rows(p, ["a,speedrun,2020-01-01T00:00:00Z,100.0"],
                header="series_id,kind,timestamp_utc,value")
    with pytest.raises(ParseError, match="metric_name"):
        load_csv(p)


def test_load_csv_bad_timestamp_and_domain(tmp_path):
    p = tmp_path / "c.csv"
    _write_rows(p, ["a,speedrun,,2020-01-01T00:00:00+01:00,100.0"])
    with pytest.raises(ParseError, match="timestamp_utc"):
        load_csv(p)
    _write_rows(p, ["a,speedrun,,2020-01-01T00:00:00Z,-5.0"])
    with pytest.raises(ParseError, match="value"):
        load_csv(p)
    _write_rows(p, ["a,ml_benchmark,err,2020-01-01T00:00:00Z,1.5"])
    with pytest.raises(ParseError, match="\\(0, 1\\)"):
        load_csv(p)


def test_load_csv_kind_mismatch_and_noncontiguous(tmp_path):
    p = tmp_path / "c.csv"
    _write_rows(p, ["a,ml_benchmark,err,2020-01-01T00:00:00Z,0.5"])
    with pytest.raises(ParseError, match="expected kind"):
        load_csv(p, kind=SeriesKind.SPEEDRUN)
    _write_rows(p, [
        "a,speedrun,,2020-01-01T00:00:00Z,100.0",
        "b,speedrun,,2020-01-01T00:00:00Z,50.0",
        "a,speedrun,,2020-01-05T00:00:00Z,90.0",
    ])
    with pytest.raises(ParseError, match="not contiguous"):
        load_csv(p)


series_strategy = st.builds(
    lambda sid, kind, start, steps: _build_series(sid, kind, start, steps),
    sid=st.text(alphabet=st.characters(whitelist_categories=("L", "N")), min_size=1, max_size=12),
    kind=st.sampled_from(list(SeriesKind)),
    start=st.integers(min_value=0, max_value=10**9),
    steps=st.lists(st.integers(min_value=1, max_value=10**7), min_size=1, max_size=20),
)


def _build_series(sid, kind, start, steps):
    ts = []
    acc = float(start)
    for s in steps:
        ts.append(acc)
        acc += s
    n = len(ts)
    if kind is SeriesKind.SPEEDRUN:
        values = [1000.0 * (0.9 ** i) + 1.0 for i in range(n)]
    else:
        values = [0.9 * (0.8 ** i) + 0.001 for i in range(n)]
    return RecordSeries(sid, kind, tuple(zip(ts, values)), metric_name="m" if kind is SeriesKind.ML_BENCHMARK else "")


@given(st.lists(series_strategy, min_size=0, max_size=5, unique_by=lambda s: s.series_id))
def test_csv_round_trip(tmp_path_factory, corpus):
    path = tmp_path_factory.mktemp("csv") / "corpus.csv"
    write_csv(corpus, path)
    loaded = load_csv(path)
    assert loaded == list(corpus)


def test_format_round_trip_subsecond():
    ts = 1_600_000_000.123456
    assert parse_rfc3339_utc(format_rfc3339_utc(ts)) == pytest.approx(ts, abs=1e-6)
