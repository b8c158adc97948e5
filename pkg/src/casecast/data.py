"""Date-indexed feature tables: loading, alignment, windowing.

Three CSV sources (daily statistics, search-interest keywords, pooled news
embeddings) are merged onto their common date range, gaps are forward
filled, and the merged table is cut into fixed-length windows whose target
is the case count ``horizon`` days past the window end.  Normalization
statistics come from the training portion only; the same statistics are
applied to validation and test so nothing leaks backwards from the future.
"""

from __future__ import annotations

import csv
import datetime
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError

# search-interest keywords, in the column order the interest CSV uses
TREND_KEYWORDS = (
    "covid", "case", "death", "fever", "vaccine", "wave", "precaution",
    "pandemic", "delta", "corona", "coronavirus", "sars_cov_2", "omicron",
)

# feature groups used by the leave-one-out study
GROUP_NAMES = (
    "cases", "vaccinations", "test", "covid_patient", "hospital",
    "population", "other_countries",
)

_SOURCES = ("stats", "trends", "news")


@dataclass
class FeatureTable:
    """Columns of float64 values indexed by calendar date (NaN = missing)."""

    dates: list[datetime.date]
    names: list[str]
    values: np.ndarray                      # (len(dates), len(names))
    source: str
    col_sources: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.dates), len(self.names)):
            raise InputError(
                f"table values {self.values.shape} do not match "
                f"{len(self.dates)} dates x {len(self.names)} columns")
        if not self.col_sources:
            self.col_sources = [self.source] * len(self.names)

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.names.index(name)]
        except ValueError:
            raise InputError(f"no column named {name!r} in {self.source} "
                             "table") from None

    def columns_from(self, source: str) -> list[str]:
        return [n for n, s in zip(self.names, self.col_sources)
                if s == source]


def _parse_date(text: str, path, line_no: int) -> datetime.date:
    try:
        return datetime.date.fromisoformat(text.strip())
    except ValueError:
        raise InputError(f"{path}:{line_no}: bad date {text!r} "
                         "(expected YYYY-MM-DD)") from None


def load_table(path, source: str) -> FeatureTable:
    """Read one CSV source.  Missing values may be left as empty cells."""
    if source not in _SOURCES:
        raise ConfigError(f"unknown table source {source!r}")
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise InputError(f"{source} file not found: {path}",
                         code="input-missing") from None
    with fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 2 or rows[0][0].strip() != "date":
        raise InputError(f"{path}:1: header must be 'date,<columns>'")
    names = [c.strip() for c in rows[0][1:]]
    if len(set(names)) != len(names):
        raise InputError(f"{path}:1: duplicate column names in header")
    seen: dict[datetime.date, int] = {}
    records = []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(names) + 1:
            raise InputError(
                f"{path}:{line_no}: expected {len(names) + 1} fields, "
                f"got {len(row)}")
        day = _parse_date(row[0], path, line_no)
        if day in seen:
            raise InputError(
                f"{path}:{line_no}: duplicate date {day.isoformat()} "
                f"(first seen on line {seen[day]})")
        seen[day] = line_no
        cells = np.empty(len(names))
        for j, cell in enumerate(row[1:]):
            cell = cell.strip()
            if not cell:
                cells[j] = np.nan
                continue
            try:
                cells[j] = float(cell)
            except ValueError:
                raise InputError(
                    f"{path}:{line_no}: non-numeric value {cell!r} in "
                    f"column {names[j]!r}") from None
        records.append((day, cells))
    if not records:
        raise InputError(f"{path}: no data rows")
    records.sort(key=lambda r: r[0])
    dates = [r[0] for r in records]
    values = np.stack([r[1] for r in records])
    return FeatureTable(dates=dates, names=names, values=values,
                        source=source)


@dataclass
class ImputationReport:
    """Per-column counts of what alignment had to fill in."""

    forward_filled: dict[str, int]
    leading_missing: dict[str, int]

    @property
    def total_forward_filled(self) -> int:
        return sum(self.forward_filled.values())

    @property
    def total_leading_missing(self) -> int:
        return sum(self.leading_missing.values())


def align_and_impute(tables: list[FeatureTable]):
    """Merge tables onto the intersection of their date ranges.

    Interior gaps are forward filled from the most recent earlier
    observation (which may come from before the shared range).  Days
    before a column's first observation stay NaN here and are zero
    filled later, after normalization.  Column order in the merged
    table is by source name, then by declaration order within each
    source, so it never depends on the order tables are passed in.
    """
    if not tables:
        raise InputError("align: no tables given")
    all_names = [n for t in tables for n in t.names]
    if len(set(all_names)) != len(all_names):
        dupes = sorted({n for n in all_names if all_names.count(n) > 1})
        raise InputError(f"align: column name collision: {dupes}")
    start = max(t.dates[0] for t in tables)
    end = min(t.dates[-1] for t in tables)
    if start > end:
        spans = {t.source: (t.dates[0].isoformat(), t.dates[-1].isoformat())
                 for t in tables}
        raise InputError(f"align: date ranges do not overlap: {spans}",
                         code="input-alignment")
    index = [start + datetime.timedelta(days=d)
             for d in range((end - start).days + 1)]

    ordered = sorted(tables, key=lambda t: t.source)
    names, col_sources, columns = [], [], []
    forward_filled: dict[str, int] = {}
    leading_missing: dict[str, int] = {}
    for table in ordered:
        date_to_row = {d: i for i, d in enumerate(table.dates)}
        for j, (name, col_source) in enumerate(
                zip(table.names, table.col_sources)):
            out = np.full(len(index), np.nan)
            carry = np.nan
            filled = 0
            # observations strictly before the shared range seed the carry
            for i, d in enumerate(table.dates):
                if d >= start:
                    break
                if np.isfinite(table.values[i, j]):
                    carry = table.values[i, j]
            for k, day in enumerate(index):
                row = date_to_row.get(day)
                cell = table.values[row, j] if row is not None else np.nan
                if np.isfinite(cell):
                    carry = cell
                elif np.isfinite(carry):
                    filled += 1
                out[k] = carry
            names.append(name)
            col_sources.append(col_source)
            columns.append(out)
            forward_filled[name] = filled
            leading_missing[name] = int(np.isnan(out).sum())
    # group columns by their per-column source (stable, so declaration
    # order survives); matters when a merged table is aligned again
    order = sorted(range(len(names)), key=lambda i: col_sources[i])
    merged = FeatureTable(
        dates=index,
        names=[names[i] for i in order],
        values=np.column_stack([columns[i] for i in order]),
        source="merged",
        col_sources=[col_sources[i] for i in order])
    return merged, ImputationReport(forward_filled=forward_filled,
                                    leading_missing=leading_missing)


@dataclass
class SplitSpec:
    train_fraction: float = 0.9
    validation_fraction: float = 0.1   # fraction of the training windows

    def validate(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError(
                "validation_fraction must be in [0, 1), got "
                f"{self.validation_fraction}")


@dataclass
class WindowedDataset:
    """Slices of the merged table ready for the network.

    ``news`` is (windows, lookback, news_dim); ``other`` holds the
    trends and stats columns, (windows, lookback, other_dim).  Targets
    are z-normalized; ``raw_targets`` keeps the original case counts so
    every window can be audited against the source table.
    """

    news: np.ndarray
    other: np.ndarray
    targets: np.ndarray
    raw_targets: np.ndarray
    window_end_dates: list[datetime.date]
    target_dates: list[datetime.date]
    feature_names: list[str]
    feature_sources: list[str]
    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_mean: float
    target_std: float
    target_column: str
    lookback: int
    horizon: int

    def __len__(self) -> int:
        return self.other.shape[0]

    def denormalize_targets(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values) * self.target_std + self.target_mean

    def batch(self, idx: np.ndarray):
        news = self.news[idx] if self.news.size else self.news[: len(idx)]
        return news, self.other[idx], self.targets[idx]


def _clamped_std(values: np.ndarray) -> float:
    std = float(np.nanstd(values)) if np.isfinite(values).any() else 0.0
    return std if np.isfinite(std) and std > 1e-12 else 1.0


def _nan_mean(values: np.ndarray) -> float:
    return (float(np.nanmean(values))
            if np.isfinite(values).any() else 0.0)


def make_windows(merged: FeatureTable, target_column: str, lookback: int,
                 horizon: int, split: SplitSpec | None = None,
                 target_table: FeatureTable | None = None):
    """Cut the merged table into (train, validation, test) window sets.

    Window ``i`` covers rows ``[i, i+lookback)``; its target is the raw
    ``target_column`` value ``horizon`` days after the window's last row.
    The chronological split happens before any shuffling, and the
    normalization statistics are fitted only on rows the training
    windows can see.

    ``target_table`` supplies the target series when the feature table
    no longer carries it (the leave-one-out study drops the case-count
    group but still predicts case counts).  It must cover the same dates
    as ``merged``.
    """
    split = split or SplitSpec()
    split.validate()
    if lookback < 1 or horizon < 1:
        raise ConfigError(
            f"lookback and horizon must be >= 1, got {lookback}/{horizon}")
    target_source = merged if target_table is None else target_table
    if target_source is not merged and (
            target_source.n_days != merged.n_days
            or target_source.dates[0] != merged.dates[0]
            or target_source.dates[-1] != merged.dates[-1]):
        raise InputError(
            "target table dates do not match the feature table")
    if target_column not in target_source.names:
        raise InputError(
            f"target column {target_column!r} not in merged table")
    n_days = merged.n_days
    n_windows = n_days - lookback - horizon + 1
    if n_windows < 2:
        raise InputError(
            f"table has {n_days} days; need at least "
            f"{lookback + horizon + 1} for one train and one test window")

    target_col = target_source.column(target_column)
    target_rows = np.arange(n_windows) + lookback - 1 + horizon
    raw_targets = target_col[target_rows].copy()
    if not np.all(np.isfinite(raw_targets)):
        bad = int(np.flatnonzero(~np.isfinite(raw_targets))[0])
        raise InputError(
            f"target {target_column!r} missing on "
            f"{merged.dates[target_rows[bad]].isoformat()} even after "
            "forward fill")

    n_train = int(np.floor(split.train_fraction * n_windows))
    n_val = int(np.floor(split.validation_fraction * n_train))
    n_fit = n_train - n_val
    n_test = n_windows - n_train
    if n_fit < 1 or n_test < 1:
        raise InputError(
            f"split leaves {n_fit} training and {n_test} test windows; "
            "need at least one of each")

    # rows visible to training windows: [0, n_train - 1 + lookback - 1]
    fit_rows = slice(0, n_train + lookback - 1)
    feature_mean = np.array([_nan_mean(col[fit_rows])
                             for col in merged.values.T])
    feature_std = np.array([_clamped_std(col[fit_rows])
                            for col in merged.values.T])
    normalized = (merged.values - feature_mean) / feature_std
    normalized = np.where(np.isnan(normalized), 0.0, normalized)

    target_mean = float(np.mean(raw_targets[:n_train]))
    target_std = _clamped_std(raw_targets[:n_train])
    targets = (raw_targets - target_mean) / target_std

    news_cols = [i for i, s in enumerate(merged.col_sources) if s == "news"]
    other_cols = [i for i, s in enumerate(merged.col_sources) if s != "news"]
    stacked = np.stack([normalized[i:i + lookback]
                        for i in range(n_windows)])
    news_all = stacked[:, :, news_cols]
    other_all = stacked[:, :, other_cols]
    end_dates = [merged.dates[i + lookback - 1] for i in range(n_windows)]
    target_dates = [merged.dates[r] for r in target_rows]

    def cut(lo, hi):
        return WindowedDataset(
            news=news_all[lo:hi], other=other_all[lo:hi],
            targets=targets[lo:hi], raw_targets=raw_targets[lo:hi],
            window_end_dates=end_dates[lo:hi],
            target_dates=target_dates[lo:hi],
            feature_names=[merged.names[i] for i in news_cols + other_cols],
            feature_sources=[merged.col_sources[i]
                             for i in news_cols + other_cols],
            feature_mean=feature_mean, feature_std=feature_std,
            target_mean=target_mean, target_std=target_std,
            target_column=target_column, lookback=lookback, horizon=horizon)

    return cut(0, n_fit), cut(n_fit, n_train), cut(n_train, n_windows)


@dataclass
class FeatureGroupMap:
    """Named groups of statistics columns for the leave-one-out study."""

    groups: dict[str, list[str]]

    def validate_against(self, stats_columns: list[str]) -> None:
        if set(self.groups) != set(GROUP_NAMES):
            raise InputError(
                f"feature groups must be exactly {sorted(GROUP_NAMES)}, "
                f"got {sorted(self.groups)}")
        assigned: dict[str, str] = {}
        for group, cols in self.groups.items():
            for col in cols:
                if col in assigned:
                    raise InputError(
                        f"column {col!r} appears in groups "
                        f"{assigned[col]!r} and {group!r}")
                if col not in stats_columns:
                    raise InputError(
                        f"group {group!r} names unknown stats column "
                        f"{col!r}")
                assigned[col] = group
        uncovered = [c for c in stats_columns if c not in assigned]
        if uncovered:
            raise InputError(
                f"stats columns not covered by any group: {uncovered}")


def load_groups(path) -> FeatureGroupMap:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"groups file not found: {path}",
                         code="input-missing") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict) or not all(
            isinstance(v, list) and all(isinstance(c, str) for c in v)
            for v in raw.values()):
        raise InputError(
            f"{path}: expected an object mapping group name to a list "
            "of column names")
    return FeatureGroupMap(groups={k: list(v) for k, v in raw.items()})


def leave_one_out(merged: FeatureTable, groups: FeatureGroupMap | None,
                  leave: str | None) -> FeatureTable:
    """Drop one feature group (or the trends / news source) from the table."""
    if leave is None or leave == "full":
        return merged
    if leave in ("trends", "news"):
        keep = [i for i, s in enumerate(merged.col_sources) if s != leave]
    else:
        if groups is None or leave not in groups.groups:
            known = sorted(groups.groups) if groups else []
            raise ConfigError(
                f"unknown feature group {leave!r}; expected one of "
                f"{known + ['trends', 'news']}")
        drop = set(groups.groups[leave])
        keep = [i for i, n in enumerate(merged.names) if n not in drop]
    if not keep:
        raise InputError(f"leaving out {leave!r} removes every column")
    return FeatureTable(
        dates=list(merged.dates),
        names=[merged.names[i] for i in keep],
        values=merged.values[:, keep].copy(),
        source="merged",
        col_sources=[merged.col_sources[i] for i in keep])
