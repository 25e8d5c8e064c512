"""Record-series corpus: domain types, frontier extraction, CSV io, filters.

A record series is the strictly-decreasing sequence of best-so-far values of
some competitive quantity (speedrun times in seconds, benchmark error rates
in (0, 1)), each paired with the UTC instant it was achieved.

CSV schema (UTF-8, header row)::

    series_id,kind,metric_name,timestamp_utc,value

with RFC 3339 timestamps, rows grouped by series_id and sorted by timestamp
within each group.  ``metric_name`` is empty for speedrun series.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Sequence

from .errors import ParseError

CSV_COLUMNS = ("series_id", "kind", "metric_name", "timestamp_utc", "value")


class SeriesKind(str, enum.Enum):
    SPEEDRUN = "speedrun"
    ML_BENCHMARK = "ml_benchmark"


@dataclass(frozen=True)
class RecordSeries:
    """One category/benchmark: monotone records with timestamps.

    Invariants (checked at construction): timestamps strictly increasing,
    values strictly decreasing, speedrun values > 0, ml values in (0, 1).
    """

    series_id: str
    kind: SeriesKind
    records: tuple[tuple[float, float], ...]  # (utc seconds since epoch, value)
    metric_name: str = ""

    def __post_init__(self):
        for i, (ts, value) in enumerate(self.records):
            if not (math.isfinite(ts) and math.isfinite(value)):
                raise ValueError(f"{self.series_id}: non-finite record at position {i}")
            if self.kind is SeriesKind.SPEEDRUN:
                if value <= 0:
                    raise ValueError(f"{self.series_id}: speedrun value must be > 0, got {value}")
            else:
                if not 0 < value < 1:
                    raise ValueError(f"{self.series_id}: ml value must be in (0, 1), got {value}")
            if i > 0:
                prev_ts, prev_value = self.records[i - 1]
                if ts <= prev_ts:
                    raise ValueError(f"{self.series_id}: timestamps not strictly increasing at position {i}")
                if value >= prev_value:
                    raise ValueError(f"{self.series_id}: values not strictly decreasing at position {i}")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def timestamps(self) -> tuple[float, ...]:
        return tuple(ts for ts, _ in self.records)

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(v for _, v in self.records)


@dataclass(frozen=True)
class CorpusFilter:
    """Inclusion filter: minimum record count, optional rank cutoff and metric set.

    ``popularity_rank_cutoff`` applies to the ranked game list consumed at
    fetch time (speedrun corpora only); ``allowed_metrics`` restricts ml
    series by metric name.
    """

    min_records: int
    popularity_rank_cutoff: int | None = None
    allowed_metrics: frozenset[str] | None = None

    def __post_init__(self):
        if self.min_records < 2:
            raise ValueError(f"min_records must be >= 2, got {self.min_records}")
        if self.allowed_metrics is not None:
            object.__setattr__(self, "allowed_metrics", frozenset(self.allowed_metrics))


def record_frontier(history: Iterable[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    """Reduce a raw run history to its strictly-decreasing record frontier.

    Ties and regressions are dropped (cumulative minimum).  Two entries at
    the same instant keep only the better value.  Idempotent.
    """
    ordered = sorted(history, key=lambda r: (r[0], r[1]))
    frontier: list[tuple[float, float]] = []
    for ts, value in ordered:
        if not frontier:
            frontier.append((ts, value))
            continue
        last_ts, last_value = frontier[-1]
        if value >= last_value:
            continue
        if ts == last_ts:
            frontier[-1] = (ts, value)
        else:
            frontier.append((ts, value))
    return tuple(frontier)


def apply_filter(corpus: Sequence[RecordSeries], flt: CorpusFilter) -> list[RecordSeries]:
    """Keep series meeting the filter; input order preserved."""
    out = []
    for series in corpus:
        if len(series) < flt.min_records:
            continue
        if (
            flt.allowed_metrics is not None
            and series.kind is SeriesKind.ML_BENCHMARK
            and series.metric_name not in flt.allowed_metrics
        ):
            continue
        out.append(series)
    return out


def parse_rfc3339_utc(text: str) -> float:
    """Parse an RFC 3339 timestamp to UTC seconds since epoch.

    Rejects naive timestamps and non-UTC offsets: gap arithmetic downstream
    must be timezone-free.
    """
    normalized = text.strip()
    if normalized.endswith(("Z", "z")):
        normalized = normalized[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(normalized)
    except ValueError as exc:
        raise ParseError(f"invalid RFC 3339 timestamp {text!r}: {exc}") from None
    if dt.tzinfo is None:
        raise ParseError(f"timestamp {text!r} has no UTC offset")
    if dt.utcoffset().total_seconds() != 0:
        raise ParseError(f"timestamp {text!r} is not UTC")
    return dt.astimezone(timezone.utc).timestamp()


def format_rfc3339_utc(ts: float) -> str:
    dt = datetime.fromtimestamp(ts, tz=timezone.utc)
    if dt.microsecond:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z"
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def load_csv(path, kind: SeriesKind | None = None) -> list[RecordSeries]:
    """Load a corpus CSV, enforcing all RecordSeries invariants.

    Curated CSVs are expected to already be record frontiers, so ties or
    regressions are errors (with the offending row number), unlike raw
    fetch histories.  ``kind`` restricts the file to one series kind.
    """
    series_list: list[RecordSeries] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ParseError(f"missing column(s) {missing} in {path}")

        current_id: str | None = None
        current_kind: SeriesKind | None = None
        current_metric = ""
        records: list[tuple[float, float]] = []
        seen_ids: set[str] = set()

        def flush():
            if current_id is None:
                return
            try:
                series_list.append(
                    RecordSeries(current_id, current_kind, tuple(records), current_metric)
                )
            except ValueError as exc:  # pragma: no cover - guarded per-row below
                raise ParseError(str(exc)) from None

        for lineno, row in enumerate(reader, start=2):
            sid = row["series_id"]
            if sid is None or sid == "":
                raise ParseError("empty series_id", row=lineno)
            try:
                row_kind = SeriesKind(row["kind"])
            except ValueError:
                raise ParseError(f"unknown kind {row['kind']!r}", row=lineno, column="kind") from None
            if kind is not None and row_kind is not kind:
                raise ParseError(
                    f"expected kind {kind.value!r}, got {row_kind.value!r}", row=lineno, column="kind"
                )
            try:
                ts = parse_rfc3339_utc(row["timestamp_utc"])
            except ParseError as exc:
                raise ParseError(str(exc), row=lineno, column="timestamp_utc") from None
            try:
                value = float(row["value"])
            except ValueError:
                raise ParseError(f"invalid value {row['value']!r}", row=lineno, column="value") from None

            if sid != current_id:
                flush()
                if sid in seen_ids:
                    raise ParseError(f"rows for series {sid!r} are not contiguous", row=lineno)
                seen_ids.add(sid)
                current_id = sid
                current_kind = row_kind
                current_metric = row["metric_name"] or ""
                records = []
            elif row_kind is not current_kind:
                raise ParseError(f"series {sid!r} mixes kinds", row=lineno, column="kind")

            if row_kind is SeriesKind.SPEEDRUN:
                if value <= 0:
                    raise ParseError(f"speedrun value must be > 0, got {value}", row=lineno, column="value")
            else:
                if not 0 < value < 1:
                    raise ParseError(f"ml value must be in (0, 1), got {value}", row=lineno, column="value")
            if records:
                if ts <= records[-1][0]:
                    raise ParseError("timestamps not strictly increasing", row=lineno, column="timestamp_utc")
                if value >= records[-1][1]:
                    raise ParseError(
                        "values not strictly decreasing (tie or regression)", row=lineno, column="value"
                    )
            records.append((ts, value))
        flush()
    return series_list


def write_csv(corpus: Sequence[RecordSeries], path) -> None:
    """Write a corpus in the documented CSV schema (round-trips load_csv)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for series in corpus:
            for ts, value in series.records:
                writer.writerow(
                    [series.series_id, series.kind.value, series.metric_name,
                     format_rfc3339_utc(ts), repr(value)]
                )
