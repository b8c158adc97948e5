"""Per-day mean pooling of headline vectors into one row per calendar day."""

from __future__ import annotations

import datetime
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .headlines import HeadlineRecord


@dataclass
class DayEmbedding:
    date: datetime.date
    vector: np.ndarray


@dataclass
class PoolingReport:
    """What went into each day's vector, for the sidecar report file."""

    headline_counts: dict[str, int] = field(default_factory=dict)
    zero_headline_days: list[str] = field(default_factory=list)
    dimension: int = 0

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "days": len(self.headline_counts),
            "total_headlines": sum(self.headline_counts.values()),
            "headline_counts": self.headline_counts,
            "zero_headline_days": self.zero_headline_days,
        }


def embed_and_pool(records: list[HeadlineRecord], encoder,
                   start: datetime.date | None = None,
                   end: datetime.date | None = None):
    """One vector per day: the arithmetic mean of that day's headlines.

    The output covers every calendar day from ``start`` to ``end``
    (default: the span of the input records), so days whose headlines
    were all filtered away still emit a row — the zero vector — and are
    listed in the report.  Summation is done in a canonical component
    order, which makes the day vector independent of headline order at
    the bit level.
    """
    if not records and (start is None or end is None):
        raise InputError("no headlines to embed (give --start and --end "
                         "to emit zero vectors for a known range)")
    start = start or min(r.date for r in records)
    end = end or max(r.date for r in records)
    if start > end:
        raise InputError(f"start {start} is after end {end}")

    vectors = encoder.encode([r.text for r in records])
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.shape != (len(records), encoder.dim):
        raise InputError(
            f"encoder returned shape {vectors.shape}, expected "
            f"({len(records)}, {encoder.dim})")
    if not np.all(np.isfinite(vectors)):
        bad = int(np.flatnonzero(~np.isfinite(vectors).all(axis=1))[0])
        raise InputError(
            f"encoder produced a non-finite vector for {records[bad].text!r}")

    by_day: dict[datetime.date, list[np.ndarray]] = {}
    for record, vec in zip(records, vectors):
        by_day.setdefault(record.date, []).append(vec)

    report = PoolingReport(dimension=encoder.dim)
    days = []
    for offset in range((end - start).days + 1):
        day = start + datetime.timedelta(days=offset)
        todays = by_day.get(day, [])
        report.headline_counts[day.isoformat()] = len(todays)
        if todays:
            stacked = np.sort(np.stack(todays), axis=0)
            pooled = stacked.sum(axis=0) / len(todays)
        else:
            pooled = np.zeros(encoder.dim)
            report.zero_headline_days.append(day.isoformat())
        days.append(DayEmbedding(date=day, vector=pooled))
    return days, report


def write_embeddings(path, days: list[DayEmbedding]) -> None:
    """Emit the ``date,e0,...`` CSV the forecasting pipeline ingests."""
    if not days:
        raise InputError("no day embeddings to write")
    dim = days[0].vector.shape[0]
    with open(path, "w") as fh:
        fh.write("date," + ",".join(f"e{i}" for i in range(dim)) + "\n")
        for day in days:
            cells = ",".join(repr(float(x)) for x in day.vector)
            fh.write(f"{day.date.isoformat()},{cells}\n")


def write_report(path, report: PoolingReport) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
