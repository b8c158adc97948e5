"""Synthetic data with a planted, recoverable signal.

The generator builds a latent "public interest" random walk.  Case
counts follow it with a three-day delay plus a two-week seasonal swing,
so a model that reads today's search interest can predict cases three
days out almost exactly, while a model without the interest columns is
stuck with the walk's irreducible three-day innovation noise.  That
makes the fixture useful for end-to-end learning tests and for checking
that feature ablations land in the expected order.

Column layout mirrors the real inputs: a stats table (with the target
column ``new_cases_per_million``), a search-interest table over the
standard keyword list, and a pooled news-embedding table whose only
signal is the seasonal component.
"""

from __future__ import annotations

import datetime
import json
import os

import numpy as np

from .data import TREND_KEYWORDS, FeatureGroupMap, FeatureTable

SYNTHETIC_GROUPS = {
    "cases": ["new_cases_per_million", "cases_smoothed_per_million",
              "new_deaths_per_million"],
    "vaccinations": ["people_vaccinated_per_hundred",
                     "total_boosters_per_hundred"],
    "test": ["new_tests_per_thousand", "positive_rate"],
    "covid_patient": ["hosp_patients_per_million",
                      "icu_patients_per_million"],
    "hospital": ["hospital_beds_per_thousand"],
    "population": ["aged_65_older", "population_density"],
    "other_countries": ["country_a_new_cases", "country_b_new_cases"],
}

TARGET_COLUMN = "new_cases_per_million"


def _dates(days: int, offset: int = 0):
    first = datetime.date(2021, 1, 1) + datetime.timedelta(days=offset)
    return [first + datetime.timedelta(days=d) for d in range(days)]


def _lag(series: np.ndarray, k: int) -> np.ndarray:
    out = np.empty_like(series)
    out[:k] = series[0]
    out[k:] = series[:-k] if k else series
    return out


def make_tables(days: int = 240, seed: int = 0, news_dim: int = 8):
    """Build (stats, trends, news) tables plus the feature-group map.

    The trends table starts three days before the stats table and the
    news table has one missing interior day, so alignment and forward
    fill get exercised on every end-to-end run.
    """
    rng = np.random.default_rng(seed)
    pad = 3  # extra leading days that only the trends table covers
    total = days + pad

    walk = np.empty(total)
    walk[0] = 0.0
    noise = rng.normal(0.0, 5.0, size=total)
    for t in range(1, total):
        walk[t] = 0.85 * walk[t - 1] + noise[t]
    interest = np.clip(50.0 + walk, 0.0, 100.0)

    t_axis = np.arange(total, dtype=np.float64)
    seasonal = 8.0 * np.sin(2.0 * np.pi * t_axis / 14.0)
    cases = 90.0 + 0.9 * _lag(interest, 3) + seasonal

    vacc = 70.0 / (1.0 + np.exp(-(t_axis - total / 2) / (total / 10)))

    trends_cols = {
        "covid": interest,
        "case": 0.9 * _lag(interest, 1) + rng.normal(0, 2, total),
        "death": 0.5 * _lag(interest, 5) + rng.normal(0, 2, total),
        "fever": 0.7 * _lag(interest, 2) + rng.normal(0, 2, total),
        "vaccine": 0.4 * vacc + rng.normal(0, 2, total),
        "wave": np.abs(seasonal) + rng.normal(0, 1, total),
        "precaution": 0.3 * _lag(interest, 2) + rng.normal(0, 2, total),
        "pandemic": 0.6 * _lag(interest, 1) + rng.normal(0, 2, total),
        "delta": 20.0 * np.exp(-((t_axis - total / 3) / 20.0) ** 2)
                 + rng.normal(0, 1, total),
        "corona": 0.8 * _lag(interest, 1) + rng.normal(0, 2, total),
        "coronavirus": 0.85 * _lag(interest, 1) + rng.normal(0, 2, total),
        "sars_cov_2": 0.2 * _lag(interest, 4) + rng.normal(0, 2, total),
        "omicron": 15.0 * np.exp(-((t_axis - 2 * total / 3) / 25.0) ** 2)
                   + rng.normal(0, 1, total),
    }
    trends = FeatureTable(
        dates=_dates(total, offset=0),
        names=list(TREND_KEYWORDS),
        values=np.column_stack([trends_cols[k] for k in TREND_KEYWORDS]),
        source="trends")

    smoothed = np.convolve(cases, np.full(14, 1.0 / 14.0), mode="full")[:total]

    sl = slice(pad, total)  # stats and news cover the last `days` days
    stats_cols = {
        "new_cases_per_million": cases[sl],
        "cases_smoothed_per_million": smoothed[sl],
        "new_deaths_per_million": 0.02 * _lag(cases, 7)[sl]
                                  + rng.normal(0, 0.1, days),
        "people_vaccinated_per_hundred": vacc[sl],
        "total_boosters_per_hundred": 0.3 * vacc[sl],
        "new_tests_per_thousand": 2.0 + 0.01 * cases[sl]
                                  + rng.normal(0, 0.05, days),
        "positive_rate": cases[sl] / 1000.0 + rng.normal(0, 0.002, days),
        "hosp_patients_per_million": 0.3 * _lag(cases, 2)[sl]
                                     + rng.normal(0, 1, days),
        "icu_patients_per_million": 0.1 * _lag(cases, 2)[sl]
                                    + rng.normal(0, 0.5, days),
        "hospital_beds_per_thousand": np.full(days, 2.5),
        "aged_65_older": np.full(days, 6.2),
        "population_density": np.full(days, 450.0),
        "country_a_new_cases": 120.0
                               + 30.0 * np.sin(2 * np.pi * t_axis[sl] / 40.0)
                               + rng.normal(0, 5, days),
        "country_b_new_cases": 80.0
                               + 25.0 * np.cos(2 * np.pi * t_axis[sl] / 55.0)
                               + rng.normal(0, 5, days),
    }
    stats_names = [n for cols in SYNTHETIC_GROUPS.values() for n in cols]
    stats = FeatureTable(
        dates=_dates(days, offset=pad),
        names=stats_names,
        values=np.column_stack([stats_cols[n] for n in stats_names]),
        source="stats")

    # news embeddings: random projection of the seasonal phase (sine and
    # cosine, so the three-day-ahead seasonal value is a linear readout),
    # while search interest stays exclusive to the trends table
    proj = rng.normal(0, 1, size=(3, news_dim))
    basis = np.column_stack([np.sin(2 * np.pi * t_axis[sl] / 14.0),
                             np.cos(2 * np.pi * t_axis[sl] / 14.0),
                             np.ones(days)])
    news_values = basis @ proj + rng.normal(0, 0.1, size=(days, news_dim))
    news_dates = _dates(days, offset=pad)
    hole = days // 2  # one missing interior day; alignment must fill it
    news = FeatureTable(
        dates=news_dates[:hole] + news_dates[hole + 1:],
        names=[f"e{i}" for i in range(news_dim)],
        values=np.delete(news_values, hole, axis=0),
        source="news")

    return stats, trends, news, FeatureGroupMap(
        groups={k: list(v) for k, v in SYNTHETIC_GROUPS.items()})


def _write_table(path, table: FeatureTable) -> None:
    with open(path, "w") as fh:
        fh.write("date," + ",".join(table.names) + "\n")
        for i, day in enumerate(table.dates):
            cells = ",".join(repr(float(v)) for v in table.values[i])
            fh.write(f"{day.isoformat()},{cells}\n")


def write_fixture(directory, days: int = 240, seed: int = 0,
                  news_dim: int = 8) -> dict[str, str]:
    """Write stats.csv, trends.csv, news_emb.csv, groups.json; return paths."""
    os.makedirs(directory, exist_ok=True)
    stats, trends, news, groups = make_tables(days=days, seed=seed,
                                              news_dim=news_dim)
    paths = {
        "stats": os.path.join(directory, "stats.csv"),
        "trends": os.path.join(directory, "trends.csv"),
        "news": os.path.join(directory, "news_emb.csv"),
        "groups": os.path.join(directory, "groups.json"),
    }
    _write_table(paths["stats"], stats)
    _write_table(paths["trends"], trends)
    _write_table(paths["news"], news)
    with open(paths["groups"], "w") as fh:
        json.dump(groups.groups, fh, indent=2)
        fh.write("\n")
    return paths
