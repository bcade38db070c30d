"""Append-only metric store backing the run reports and charts.

One writer, many readers; samples live in memory and, when a path is
given, are mirrored line-by-line into an NDJSON file so a run can be
reopened and re-queried later. No external database: flat files keep the
edge artifact dependency-free.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterator

from .errors import GatewayError

__all__ = ["MetricSample", "TelemetryStore", "UnknownSeries"]

HOUR_S = 3600


class UnknownSeries(GatewayError):
    """Query for a series that was never written."""


@dataclass(frozen=True)
class MetricSample:
    series: str
    t: float
    value: float


class TelemetryStore:
    """In-memory series map with optional write-through NDJSON file."""

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path else None
        self._series: dict[str, list[MetricSample]] = {}
        self._fp: IO[str] | None = None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fp = open(self.path, "w", encoding="utf-8")

    def close(self) -> None:
        if self._fp:
            self._fp.close()
            self._fp = None

    def __enter__(self) -> "TelemetryStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- writing ------------------------------------------------------------

    def record(self, series: str, t: float, value: float) -> MetricSample:
        """Append one sample; timestamps must not go backwards per series."""
        samples = self._series.setdefault(series, [])
        if samples and t < samples[-1].t:
            raise ValueError(
                f"{series}: timestamp {t} precedes last appended {samples[-1].t}"
            )
        sample = MetricSample(series, t, value)
        samples.append(sample)
        if self._fp:
            self._fp.write(json.dumps({"series": series, "t": t, "value": value}) + "\n")
        return sample

    # -- reading ------------------------------------------------------------

    def series_names(self) -> list[str]:
        return list(self._series)

    def _samples(self, series: str) -> list[MetricSample]:
        try:
            return self._series[series]
        except KeyError:
            raise UnknownSeries(series) from None

    def query(self, series: str, t0: float, t1: float) -> list[MetricSample]:
        """Samples with t0 <= t < t1, in append order."""
        if t0 > t1:
            raise ValueError("t0 must not exceed t1")
        return [s for s in self._samples(series) if t0 <= s.t < t1]

    def hourly_count(self, series: str, t0: float, t1: float) -> list[tuple[int, int]]:
        """(hour_start, sample count) per hour bucket overlapping [t0, t1).

        Buckets are floor(t/3600); hours without samples report zero.
        """
        samples = self.query(series, t0, t1)
        if t0 == t1:
            return []
        first_hour = math.floor(t0 / HOUR_S)
        last_hour = math.ceil(t1 / HOUR_S)
        counts = {h: 0 for h in range(first_hour, last_hour)}
        for sample in samples:
            counts[math.floor(sample.t / HOUR_S)] += 1
        return [(h * HOUR_S, counts[h]) for h in sorted(counts)]

    def lqi_trace(self, friendly_name: str, t0: float, t1: float) -> list[MetricSample]:
        """Per-frame link quality samples for one device over a window."""
        return self.query(f"lqi.{friendly_name}", t0, t1)

    # -- persistence ---------------------------------------------------------

    @classmethod
    def load(cls, path: str | Path) -> "TelemetryStore":
        """Reopen a finished store file (read-only: no write-through)."""
        store = cls()
        with open(path, encoding="utf-8") as fp:
            for line in fp:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                store.record(record["series"], record["t"], record["value"])
        store.path = Path(path)
        return store

    def export_csv(self, series: str, fp: IO[str]) -> int:
        """Write one series as t,value CSV rows; returns the row count."""
        samples = self._samples(series)  # unknown series fails before any output
        writer = csv.writer(fp)
        writer.writerow(["t", "value"])
        for sample in samples:
            writer.writerow([sample.t, sample.value])
        return len(samples)

    def iter_all(self) -> Iterator[MetricSample]:
        for samples in self._series.values():
            yield from samples
