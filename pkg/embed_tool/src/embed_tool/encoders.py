"""Sentence encoders behind one tiny interface: encode(texts) -> (n, D).

A real pretrained transformer is loaded on demand; everything else in
the tool only assumes the interface, so tests run with deterministic
local encoders and no model download.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ConfigError, InputError

POOLING_MODES = ("token_mean", "cls")


class StubEncoder:
    """Maps exact texts to preset vectors; the oracle for pooling tests."""

    def __init__(self, vectors: dict[str, np.ndarray]):
        if not vectors:
            raise ConfigError("stub encoder needs at least one vector")
        self._vectors = {t: np.asarray(v, dtype=np.float64)
                         for t, v in vectors.items()}
        dims = {v.shape for v in self._vectors.values()}
        if len(dims) != 1 or len(next(iter(dims))) != 1:
            raise ConfigError(
                f"stub encoder vectors must share one 1-D shape, got {dims}")
        self.dim = next(iter(dims))[0]

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim))
        for i, text in enumerate(texts):
            if text not in self._vectors:
                raise InputError(f"stub encoder has no vector for {text!r}")
            out[i] = self._vectors[text]
        return out


class HashEncoder:
    """Deterministic pseudo-embeddings from a text digest.

    A stand-in for environments without the pretrained model: stable
    across runs and platforms, distinct for distinct texts, and entirely
    offline.  Not semantically meaningful.
    """

    def __init__(self, dim: int = 768):
        if dim < 1:
            raise ConfigError(f"encoder dimension must be >= 1, got {dim}")
        self.dim = dim

    def _vector(self, text: str) -> np.ndarray:
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        vec = rng.standard_normal(self.dim)
        return vec / np.sqrt(self.dim)

    def encode(self, texts: list[str]) -> np.ndarray:
        return np.stack([self._vector(t) for t in texts]) \
            if texts else np.empty((0, self.dim))


class TransformerEncoder:
    """Pretrained encoder; pools token vectors into one per sentence."""

    def __init__(self, model_id: str, pooling: str = "token_mean"):
        if pooling not in POOLING_MODES:
            raise ConfigError(
                f"pooling must be one of {POOLING_MODES}, got {pooling!r}")
        try:
            from transformers import AutoModel, AutoTokenizer
        except ImportError:
            raise InputError(
                f"cannot load encoder {model_id!r}: the 'transformers' "
                "package is not installed (use --encoder hash for the "
                "offline fallback)", code="encoder-load") from None
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(model_id)
            self._model = AutoModel.from_pretrained(model_id)
        except Exception as exc:
            raise InputError(f"cannot load encoder {model_id!r}: {exc}",
                             code="encoder-load") from exc
        self._pooling = pooling
        self.dim = int(self._model.config.hidden_size)

    def encode(self, texts: list[str]) -> np.ndarray:
        import torch

        out = np.empty((len(texts), self.dim))
        with torch.no_grad():
            for i, text in enumerate(texts):
                tokens = self._tokenizer(text, return_tensors="pt",
                                         truncation=True,
                                         return_special_tokens_mask=True)
                special = tokens.pop("special_tokens_mask")[0]
                hidden = self._model(**tokens).last_hidden_state[0]
                if self._pooling == "cls":
                    vec = hidden[0]
                else:
                    # mean over real tokens, skipping the special ones
                    vec = hidden[special == 0].mean(dim=0)
                out[i] = vec.numpy()
        return out


def load_encoder(spec: str, dim: int | None = None,
                 pooling: str = "token_mean"):
    """Resolve an encoder name: 'hash' is built in, anything else is
    treated as a pretrained model identifier."""
    if spec == "hash":
        return HashEncoder(dim or 768)
    return TransformerEncoder(spec, pooling=pooling)
