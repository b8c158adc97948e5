"""Full forecasting network: news branch, attention block, two GRU layers.

Per timestep the news encoding passes through the dense branch, is
concatenated with the trends+stats features, optionally gets positional
encoding and the attention block, then two GRU layers and a linear head
produce one scalar prediction per window (in normalized target units).

Parameters live in a flat ``{name: ndarray}`` dict so the optimizer,
serializer, and gradient checker all share one representation.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError, InputError, NumericError, ShapeError
from .layers import (
    DenseLayer,
    GruCell,
    MultiHeadAttention,
    dropout,
    dropout_backward,
    gru_layer_backward,
    gru_layer_forward,
    positional_encoding,
)
from .tensor import GradTape


@dataclass(frozen=True)
class ModelConfig:
    trends_dim: int
    stats_dim: int
    news_dim: int = 768
    news_hidden: tuple[int, ...] = (156, 32)
    lookback: int = 7
    horizon: int = 3
    gru_units: int = 100
    num_heads: int = 6
    head_size: int = 128
    dropout: float = 0.2
    use_attention: bool = True
    use_positional_encoding: bool = True
    norm_then_add: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "news_hidden", tuple(self.news_hidden))

    @property
    def feature_dim(self) -> int:
        use_news = self.news_dim > 0 and len(self.news_hidden) > 0
        news_part = self.news_hidden[-1] if use_news else 0
        return news_part + self.trends_dim + self.stats_dim

    @property
    def other_dim(self) -> int:
        return self.trends_dim + self.stats_dim

    def validate(self) -> None:
        checks = [
            (self.lookback >= 1, f"lookback >= 1 (got {self.lookback})"),
            (self.horizon >= 1, f"horizon >= 1 (got {self.horizon})"),
            (self.gru_units >= 1, f"gru_units >= 1 (got {self.gru_units})"),
            (0.0 <= self.dropout < 1.0,
             f"dropout in [0, 1) (got {self.dropout})"),
            (self.news_dim >= 0, f"news_dim >= 0 (got {self.news_dim})"),
            (self.trends_dim >= 0,
             f"trends_dim >= 0 (got {self.trends_dim})"),
            (self.stats_dim >= 0, f"stats_dim >= 0 (got {self.stats_dim})"),
            (self.feature_dim >= 1,
             f"at least one input feature (got feature_dim="
             f"{self.feature_dim})"),
        ]
        if self.news_dim > 0:
            checks.append((len(self.news_hidden) >= 1
                           and all(h >= 1 for h in self.news_hidden),
                           f"news_hidden sizes >= 1 (got "
                           f"{self.news_hidden})"))
        if self.use_attention:
            checks.append((self.num_heads >= 1,
                           f"num_heads >= 1 (got {self.num_heads})"))
            checks.append((self.head_size >= 1,
                           f"head_size >= 1 (got {self.head_size})"))
        if self.use_positional_encoding and self.feature_dim < 2:
            checks.append((False, "positional encoding needs feature_dim"
                                  " >= 2"))
        for ok, constraint in checks:
            if not ok:
                raise ConfigError(f"model config violates: {constraint}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["news_hidden"] = list(self.news_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(
                f"model config has unknown keys: {', '.join(unknown)}")
        d["news_hidden"] = tuple(d.get("news_hidden", (156, 32)))
        return cls(**d)


@dataclass
class ForecastOutput:
    predictions: np.ndarray    # normalized target units
    denormalized: np.ndarray   # cases per million per day


def build_params(config: ModelConfig,
                 seed: int | None = None) -> dict[str, np.ndarray]:
    """Seeded Glorot initialization of every trainable array."""
    config.validate()
    rng = np.random.default_rng(config.seed if seed is None else seed)
    params: dict[str, np.ndarray] = {}
    if config.news_dim > 0:
        in_dim = config.news_dim
        for i, width in enumerate(config.news_hidden):
            layer = DenseLayer.init(rng, in_dim, width, activation="relu")
            params[f"news{i}.w"] = layer.weight
            params[f"news{i}.b"] = layer.bias
            in_dim = width
    if config.use_attention:
        mha = MultiHeadAttention.init(
            rng, config.feature_dim, config.num_heads, config.head_size,
            norm_then_add=config.norm_then_add)
        for i in range(config.num_heads):
            params[f"attn.q{i}"] = mha.w_q[i]
            params[f"attn.k{i}"] = mha.w_k[i]
            params[f"attn.v{i}"] = mha.w_v[i]
        params["attn.out_w"] = mha.w_out
        params["attn.out_b"] = mha.b_out
        params["attn.norm_gain"] = mha.norm_gain
        params["attn.norm_bias"] = mha.norm_bias
    gru1 = GruCell.init(rng, config.feature_dim, config.gru_units)
    gru2 = GruCell.init(rng, config.gru_units, config.gru_units)
    for tag, cell in (("gru1", gru1), ("gru2", gru2)):
        for name in GruCell.PARAM_NAMES:
            params[f"{tag}.{name}"] = getattr(
                cell, "b_" + name[1] if name.startswith("b") else "w_" + name)
    head = DenseLayer.init(rng, config.gru_units, 1, activation="linear")
    params["out.w"] = head.weight
    params["out.b"] = head.bias
    return params


def _news_layers(params, config) -> list[DenseLayer]:
    return [DenseLayer(weight=params[f"news{i}.w"], bias=params[f"news{i}.b"],
                       activation="relu")
            for i in range(len(config.news_hidden))]


def _attention(params, config) -> MultiHeadAttention:
    return MultiHeadAttention(
        w_q=[params[f"attn.q{i}"] for i in range(config.num_heads)],
        w_k=[params[f"attn.k{i}"] for i in range(config.num_heads)],
        w_v=[params[f"attn.v{i}"] for i in range(config.num_heads)],
        w_out=params["attn.out_w"], b_out=params["attn.out_b"],
        norm_gain=params["attn.norm_gain"],
        norm_bias=params["attn.norm_bias"],
        norm_then_add=config.norm_then_add)


def _gru_cell(params, tag) -> GruCell:
    kwargs = {}
    for name in GruCell.PARAM_NAMES:
        attr = "b_" + name[1] if name.startswith("b") else "w_" + name
        kwargs[attr] = params[f"{tag}.{name}"]
    return GruCell(**kwargs)


def _check_inputs(config, news, other):
    if other.ndim != 3 or other.shape[-1] != config.other_dim:
        raise ShapeError(
            f"forward: trends+stats input {other.shape} does not match "
            f"other_dim {config.other_dim}")
    if config.news_dim > 0:
        if news is None or news.ndim != 3:
            raise ShapeError("forward: news input must be 3-D "
                             f"(got {None if news is None else news.shape})")
        if news.shape[-1] != config.news_dim:
            raise ShapeError(
                f"forward: news input {news.shape} does not match news_dim "
                f"{config.news_dim}")
        if news.shape[:2] != other.shape[:2]:
            raise ShapeError(
                f"forward: news batch/steps {news.shape[:2]} differ from "
                f"trends+stats {other.shape[:2]}")


def _run_forward(params, config, news, other, training, rng,
                 tape: GradTape | None, grads: dict | None):
    _check_inputs(config, news, other)
    batch, steps = other.shape[:2]

    if config.news_dim > 0:
        layers = _news_layers(params, config)
        flat = news.reshape(batch * steps, config.news_dim)
        caches, masks = [], []
        for layer in layers:
            flat, cache = layer.forward(flat)
            flat, mask = dropout(flat, config.dropout, training, rng)
            caches.append(cache)
            masks.append(mask)
        news_width = config.news_hidden[-1]
        x = np.concatenate(
            [flat.reshape(batch, steps, news_width), other], axis=-1)

        def back_news(g):
            g_flat = g[..., :news_width].reshape(batch * steps, news_width)
            g_other = g[..., news_width:]
            for i in reversed(range(len(layers))):
                g_flat = dropout_backward(g_flat, masks[i])
                g_flat, layer_grads = layers[i].backward(g_flat, caches[i])
                grads[f"news{i}.w"] = layer_grads["w"]
                grads[f"news{i}.b"] = layer_grads["b"]
            return g_flat.reshape(batch, steps, -1), g_other

        if tape is not None:
            tape.record("news-branch", back_news)
    else:
        x = other

        def back_passthrough(g):
            return None, g

        if tape is not None:
            tape.record("news-branch", back_passthrough)

    if config.use_positional_encoding:
        x = x + positional_encoding(steps, config.feature_dim)[None, :, :]
        if tape is not None:
            tape.record("positional-encoding", lambda g: g)

    if config.use_attention:
        mha = _attention(params, config)
        x, mha_cache = mha.forward(x)

        def back_attention(g):
            dx, local = mha.backward(g, mha_cache)
            for name, value in local.items():
                grads[f"attn.{name}"] = value
            return dx

        if tape is not None:
            tape.record("attention", back_attention)

    cell1 = _gru_cell(params, "gru1")
    x, gru1_caches = gru_layer_forward(cell1, x, return_sequence=True)

    def back_gru1(g):
        dx, local = gru_layer_backward(cell1, g, gru1_caches,
                                       return_sequence=True)
        for name, value in local.items():
            grads[f"gru1.{name}"] = value
        return dx

    if tape is not None:
        tape.record("gru1", back_gru1)

    x, drop_mask = dropout(x, config.dropout, training, rng)
    if tape is not None:
        tape.record("dropout",
                    lambda g, mask=drop_mask: dropout_backward(g, mask))

    cell2 = _gru_cell(params, "gru2")
    h_final, gru2_caches = gru_layer_forward(cell2, x, return_sequence=False)

    def back_gru2(g):
        dx, local = gru_layer_backward(cell2, g, gru2_caches,
                                       return_sequence=False)
        for name, value in local.items():
            grads[f"gru2.{name}"] = value
        return dx

    if tape is not None:
        tape.record("gru2", back_gru2)

    head = DenseLayer(weight=params["out.w"], bias=params["out.b"],
                      activation="linear")
    out, head_cache = head.forward(h_final)

    def back_head(g):
        dx, local = head.backward(g[:, None], head_cache)
        grads["out.w"] = local["w"]
        grads["out.b"] = local["b"]
        return dx

    if tape is not None:
        tape.record("head", back_head)
    return out[:, 0]


def forward(params: dict, config: ModelConfig, news, other,
            training: bool = False, seed: int = 0) -> np.ndarray:
    """Predictions in normalized target units, one per window."""
    rng = np.random.default_rng(seed) if training else None
    return _run_forward(params, config, news, other, training, rng,
                        tape=None, grads=None)


def loss_and_grads(params: dict, config: ModelConfig, news, other,
                   targets: np.ndarray, seed: int = 0):
    """Mean squared error over the batch plus gradients for every parameter.

    Dropout is active and driven by ``seed``, so repeated calls with the
    same arguments are bit-identical.
    """
    targets = np.asarray(targets, dtype=np.float64)
    batch = other.shape[0]
    if targets.shape != (batch,):
        raise ShapeError(
            f"loss: targets {targets.shape} do not match batch size {batch}")
    tape = GradTape()
    grads: dict[str, np.ndarray] = {}
    rng = np.random.default_rng(seed)
    preds = _run_forward(params, config, news, other, True, rng, tape, grads)
    if not np.all(np.isfinite(preds)):
        bad = int(np.flatnonzero(~np.isfinite(preds))[0])
        raise NumericError(
            f"loss: non-finite prediction at batch index {bad}")
    resid = preds - targets
    loss = float(np.mean(resid * resid))
    if not np.isfinite(loss):
        raise NumericError("loss: non-finite loss value")
    tape.backward(2.0 * resid / batch)
    return loss, grads


def zeros_like_params(params: dict) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def clone_params(params: dict) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in params.items()}


def save_params(path, params: dict, config: ModelConfig) -> None:
    """Single-file snapshot: named float64 arrays plus a config echo."""
    payload = dict(params)
    payload["__config__"] = np.array(
        json.dumps(config.to_dict(), sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_params(path, expected_config: ModelConfig | None = None):
    """Load a snapshot; refuses to load when the config echo differs."""
    try:
        handle = np.load(path, allow_pickle=False)
    except FileNotFoundError:
        raise InputError(f"parameter file not found: {path}",
                         code="input-missing") from None
    with handle as data:
        if "__config__" not in data:
            raise ConfigError(f"parameter file {path} has no config echo")
        config = ModelConfig.from_dict(json.loads(str(data["__config__"])))
        params = {k: np.array(data[k]) for k in data.files
                  if k != "__config__"}
    if expected_config is not None and config != expected_config:
        raise ConfigError(
            "parameter file config does not match the requested config; "
            f"stored={config.to_dict()} requested={expected_config.to_dict()}")
    return params, config


def predict(params: dict, config: ModelConfig, dataset) -> ForecastOutput:
    """Inference on a windowed dataset, denormalized with its target stats."""
    preds = forward(params, config, dataset.news, dataset.other,
                    training=False)
    return ForecastOutput(
        predictions=preds,
        denormalized=dataset.denormalize_targets(preds))
