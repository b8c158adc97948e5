"""Dated headline records: CSV ingestion and the keyword filter."""

from __future__ import annotations

import csv
import datetime
from dataclasses import dataclass

from .errors import InputError

# a headline is kept when its lowercased text contains any of these
KEYWORDS = (
    "covid", "case", "death", "fever", "vaccine", "wave", "precaution",
    "omicron", "pandemic", "delta", "corona", "coronavirus", "sars-cov-2",
)


@dataclass(frozen=True)
class HeadlineRecord:
    date: datetime.date
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise InputError(f"empty headline text on {self.date}")


def load_headlines(path) -> list[HeadlineRecord]:
    """Read a ``date,text`` CSV; the text field may be quoted."""
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise InputError(f"headlines file not found: {path}",
                         code="input-missing") from None
    with fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["date", "text"]:
        raise InputError(f"{path}:1: header must be 'date,text'")
    records = []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise InputError(
                f"{path}:{line_no}: expected 2 fields, got {len(row)}")
        try:
            day = datetime.date.fromisoformat(row[0].strip())
        except ValueError:
            raise InputError(f"{path}:{line_no}: bad date {row[0]!r} "
                             "(expected YYYY-MM-DD)") from None
        if not row[1].strip():
            raise InputError(f"{path}:{line_no}: empty headline text")
        records.append(HeadlineRecord(date=day, text=row[1]))
    if not records:
        raise InputError(f"{path}: no headlines")
    return records


def matched_keywords(text: str) -> list[str]:
    lowered = text.lower()
    return [k for k in KEYWORDS if k in lowered]


def filter_headlines(records: list[HeadlineRecord]) -> list[HeadlineRecord]:
    """Keep records whose text mentions at least one tracked keyword."""
    return [r for r in records if matched_keywords(r.text)]
