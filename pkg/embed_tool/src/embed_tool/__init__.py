"""Headline filtering, sentence embedding, and per-day mean pooling."""

from .encoders import HashEncoder, StubEncoder, TransformerEncoder, \
    load_encoder
from .errors import ConfigError, EmbedToolError, InputError
from .headlines import (
    KEYWORDS,
    HeadlineRecord,
    filter_headlines,
    load_headlines,
    matched_keywords,
)
from .pooling import (
    DayEmbedding,
    PoolingReport,
    embed_and_pool,
    write_embeddings,
    write_report,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DayEmbedding",
    "EmbedToolError",
    "HashEncoder",
    "HeadlineRecord",
    "InputError",
    "KEYWORDS",
    "PoolingReport",
    "StubEncoder",
    "TransformerEncoder",
    "embed_and_pool",
    "filter_headlines",
    "load_encoder",
    "load_headlines",
    "matched_keywords",
    "write_embeddings",
    "write_report",
]
