"""Leaderboard HTTP client: fetch run histories, reduce them to record frontiers.

The client speaks a minimal leaderboard API:

    GET {base}/games/{game_id}/categories
        -> {"categories": [{"id": "<category_id>"}, ...]}
    GET {base}/categories/{category_id}/runs?page=<n>
        -> {"runs": [{"date": "<rfc3339>", "time_seconds": <float>}, ...],
            "next_page": <int or null>}

Requests are rate limited and transient failures are retried with bounded
exponential backoff.  Output is deterministic given identical server
responses.  The client is optional at runtime; all downstream analysis
consumes CSV corpora.
"""
from __future__ import annotations

import time
from typing import Sequence

import requests

from .errors import ParseError, TransportError
from .ingest import RecordSeries, SeriesKind, parse_rfc3339_utc, record_frontier

RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


class RateLimiter:
    """Enforce a minimum interval between consecutive requests.

    ``clock``/``sleep`` are injectable for tests.
    """

    def __init__(self, requests_per_second: float, clock=time.monotonic, sleep=time.sleep):
        if requests_per_second <= 0:
            raise ValueError("rate limit must be > 0 requests/sec")
        self.min_interval = 1.0 / requests_per_second
        self._clock = clock
        self._sleep = sleep
        self._last: float | None = None

    def wait(self) -> None:
        now = self._clock()
        if self._last is not None:
            remaining = self._last + self.min_interval - now
            if remaining > 0:
                self._sleep(remaining)
                now = self._clock()
        self._last = now


class LeaderboardClient:
    def __init__(
        self,
        base_url: str,
        rate_limit: float = 5.0,
        max_retries: int = 4,
        backoff_base: float = 0.5,
        session: requests.Session | None = None,
        sleep=time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.limiter = RateLimiter(rate_limit, sleep=sleep)
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.session = session or requests.Session()
        self._sleep = sleep

    def _get_json(self, path: str, params: dict | None = None) -> dict:
        url = f"{self.base_url}{path}"
        last_status = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff_base * 2 ** (attempt - 1))
            self.limiter.wait()
            try:
                resp = self.session.get(url, params=params, timeout=30)
            except requests.RequestException:
                last_status = None
                continue
            last_status = resp.status_code
            if resp.status_code in RETRYABLE_STATUSES:
                continue
            if resp.status_code != 200:
                break
            try:
                return resp.json()
            except ValueError:
                raise ParseError(f"non-JSON payload from {url}") from None
        raise TransportError(f"GET {url} failed after {self.max_retries + 1} attempts", last_status=last_status)

    def category_ids(self, game_id: str) -> list[str]:
        payload = self._get_json(f"/games/{game_id}/categories")
        cats = payload.get("categories")
        if not isinstance(cats, list):
            raise ParseError("malformed categories payload", field="categories")
        ids = []
        for entry in cats:
            if not isinstance(entry, dict) or "id" not in entry:
                raise ParseError("category entry missing id", field="categories[].id")
            ids.append(str(entry["id"]))
        return ids

    def run_history(self, category_id: str) -> list[tuple[float, float]]:
        """All runs of a category as (utc seconds, seconds) pairs, paginated."""
        history: list[tuple[float, float]] = []
        page = 1
        while page is not None:
            payload = self._get_json(f"/categories/{category_id}/runs", params={"page": page})
            runs = payload.get("runs")
            if not isinstance(runs, list):
                raise ParseError("malformed runs payload", field="runs")
            for entry in runs:
                if not isinstance(entry, dict) or "date" not in entry:
                    raise ParseError("run entry missing date", field="runs[].date")
                if "time_seconds" not in entry:
                    raise ParseError("run entry missing time", field="runs[].time_seconds")
                ts = parse_rfc3339_utc(str(entry["date"]))
                try:
                    seconds = float(entry["time_seconds"])
                except (TypeError, ValueError):
                    raise ParseError(
                        f"invalid run time {entry['time_seconds']!r}", field="runs[].time_seconds"
                    ) from None
                if seconds <= 0:
                    raise ParseError(f"run time must be > 0, got {seconds}", field="runs[].time_seconds")
                history.append((ts, seconds))
            page = payload.get("next_page")
        return history


def fetch_speedrun_series(
    game_list: Sequence[str],
    http_endpoint: str,
    rate_limit: float = 5.0,
    client: LeaderboardClient | None = None,
) -> list[RecordSeries]:
    """One RecordSeries per (game, category), reduced to the record frontier.

    ``game_list`` is assumed ranked by popularity; callers apply any rank
    cutoff by truncating it.  Empty categories yield empty series and are
    left for corpus filters to drop.
    """
    client = client or LeaderboardClient(http_endpoint, rate_limit=rate_limit)
    corpus = []
    for game_id in game_list:
        for category_id in client.category_ids(game_id):
            history = client.run_history(category_id)
            corpus.append(
                RecordSeries(
                    series_id=f"{game_id}/{category_id}",
                    kind=SeriesKind.SPEEDRUN,
                    records=record_frontier(history),
                )
            )
    return corpus
