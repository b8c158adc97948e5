"""Command line entry point: headlines.csv in, news_emb.csv + report out."""

import argparse
import datetime
import os
import sys

from .encoders import POOLING_MODES, load_encoder
from .errors import ConfigError, EmbedToolError
from .headlines import filter_headlines, load_headlines
from .pooling import embed_and_pool, write_embeddings, write_report


def _parse_date(text: str) -> datetime.date:
    try:
        return datetime.date.fromisoformat(text)
    except ValueError:
        raise ConfigError(f"bad date {text!r} (expected YYYY-MM-DD)") \
            from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-tool",
        description="filter dated news headlines by outbreak keywords, "
                    "embed them, and pool one vector per day")
    parser.add_argument("--headlines", required=True,
                        help="input CSV with a 'date,text' header")
    parser.add_argument("--out-dir", required=True,
                        help="directory for news_emb.csv and report.json")
    parser.add_argument("--encoder", default="hash",
                        help="'hash' (offline, deterministic) or a "
                             "pretrained model identifier")
    parser.add_argument("--dim", type=int, default=None,
                        help="vector width for the hash encoder "
                             "(default 768)")
    parser.add_argument("--pooling", default="token_mean",
                        choices=POOLING_MODES,
                        help="sentence pooling for pretrained encoders")
    parser.add_argument("--start", default=None,
                        help="first output day (default: earliest headline)")
    parser.add_argument("--end", default=None,
                        help="last output day (default: latest headline)")
    return parser


def run(args) -> int:
    if args.dim is not None and args.dim < 1:
        raise ConfigError(f"--dim must be >= 1, got {args.dim}")
    records = load_headlines(args.headlines)
    kept = filter_headlines(records)
    encoder = load_encoder(args.encoder, dim=args.dim, pooling=args.pooling)
    start = _parse_date(args.start) if args.start else None
    end = _parse_date(args.end) if args.end else None
    days, report = embed_and_pool(kept, encoder, start=start, end=end)

    os.makedirs(args.out_dir, exist_ok=True)
    write_embeddings(os.path.join(args.out_dir, "news_emb.csv"), days)
    write_report(os.path.join(args.out_dir, "report.json"), report)
    print(f"kept {len(kept)} of {len(records)} headlines; wrote "
          f"{len(days)} day vectors of width {report.dimension} "
          f"({len(report.zero_headline_days)} days had no headlines)")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except EmbedToolError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return exc.exit_status


if __name__ == "__main__":
    raise SystemExit(main())
