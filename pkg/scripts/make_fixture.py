#!/usr/bin/env python3
"""Write the bundled synthetic data sources to a directory.

The fixture plants a recoverable signal: the 'covid' search-interest
column leads the case curve by exactly the forecast horizon, and the
news embeddings encode the seasonal term.  Useful for exercising the
command line tool without any external data.
"""

import argparse

from casecast.synthetic import write_fixture


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True,
                        help="directory for stats.csv, trends.csv, "
                             "news_emb.csv, groups.json")
    parser.add_argument("--days", type=int, default=240)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--news-dim", type=int, default=8)
    args = parser.parse_args()

    paths = write_fixture(args.out, days=args.days, seed=args.seed,
                          news_dim=args.news_dim)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
