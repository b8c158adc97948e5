"""Network layers with explicit forward caches and analytic backwards.

Layers are plain dataclasses over float64 arrays. ``forward`` returns
``(output, cache)``; ``backward`` consumes the upstream gradient plus that
cache and returns input gradients together with a dict of parameter
gradients keyed by the layer's local parameter names.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import (
    layer_norm,
    layer_norm_backward,
    relu,
    relu_backward,
    sigmoid,
    sigmoid_backward,
    softmax_rows,
    softmax_rows_backward,
    tanh,
    tanh_backward,
)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


@dataclass
class DenseLayer:
    """Affine map ``x @ weight + bias`` with an optional ReLU."""

    weight: np.ndarray          # (in_dim, out_dim)
    bias: np.ndarray            # (out_dim,)
    activation: str = "linear"  # 'relu' | 'linear'

    def __post_init__(self):
        if self.activation not in ("relu", "linear"):
            raise ConfigError(
                f"dense: unsupported activation '{self.activation}'")
        if self.bias.shape != (self.weight.shape[1],):
            raise ShapeError(
                f"dense: bias {self.bias.shape} does not match "
                f"weight {self.weight.shape}")

    @classmethod
    def init(cls, rng: np.random.Generator, in_dim: int, out_dim: int,
             activation: str = "linear") -> "DenseLayer":
        return cls(weight=glorot_uniform(rng, in_dim, out_dim),
                   bias=np.zeros(out_dim), activation=activation)

    def forward(self, x: np.ndarray):
        if x.ndim != 2 or x.shape[1] != self.weight.shape[0]:
            raise ShapeError(
                f"dense: input {x.shape} does not match weight "
                f"{self.weight.shape}")
        z = x @ self.weight + self.bias
        y = relu(z) if self.activation == "relu" else z
        return y, (x, z)

    def backward(self, g: np.ndarray, cache):
        x, z = cache
        if self.activation == "relu":
            g = relu_backward(g, z)
        dw = x.T @ g
        db = g.sum(axis=0)
        dx = g @ self.weight.T
        return dx, {"w": dw, "b": db}


def dropout(x: np.ndarray, rate: float, training: bool,
            rng: np.random.Generator | None = None):
    """Inverted dropout. Identity at inference; returns ``(y, mask)``.

    The mask already carries the 1/(1-rate) survivor scaling, so backward
    is a plain elementwise product.
    """
    if not (0.0 <= rate < 1.0):
        raise ConfigError(f"dropout: rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ConfigError("dropout: training mode needs an rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(g: np.ndarray, mask) -> np.ndarray:
    return g if mask is None else g * mask


def positional_encoding(steps: int, dim: int) -> np.ndarray:
    """Sinusoidal position table of shape (steps, dim), entries in [-1, 1]."""
    if dim < 2:
        raise ConfigError(f"positional_encoding: dim must be >= 2, got {dim}")
    positions = np.arange(steps, dtype=np.float64)[:, None]
    pair = np.arange(0, dim, 2, dtype=np.float64)
    angles = positions / np.power(10000.0, pair / dim)
    table = np.zeros((steps, dim))
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles[:, : dim // 2])
    return table


def scaled_dot_product_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray):
    """softmax(Q K^T / sqrt(dim_k)) V over the trailing two axes.

    Accepts matrices (steps, dim) or batches (batch, steps, dim); the
    output matches the input rank. Returns ``(out, cache)``.
    """
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(
            f"attention: query dim {q.shape} != key dim {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(
            f"attention: key steps {k.shape} != value steps {v.shape}")
    squeeze = q.ndim == 2
    if squeeze:
        q, k, v = q[None], k[None], v[None]
    dim_k = q.shape[-1]
    # Score and mixing sums are written so a permutation of the steps
    # permutes the output bit-for-bit: each query/key dot runs over the
    # (unpermuted) feature axis, and the value mixture accumulates its
    # step terms in sorted value order.
    scores = (q[..., :, None, :] * k[..., None, :, :]).sum(axis=-1)
    scores = scores / np.sqrt(dim_k)
    probs = softmax_rows(scores)
    mix = probs[..., :, :, None] * v[..., None, :, :]
    out = np.sort(mix, axis=-2).sum(axis=-2)
    if squeeze:
        out = out[0]
    return out, (q, k, v, probs, squeeze)


def scaled_dot_product_attention_backward(g: np.ndarray, cache):
    q, k, v, probs, squeeze = cache
    if squeeze:
        g = g[None]
    inv_scale = 1.0 / np.sqrt(q.shape[-1])
    dv = np.swapaxes(probs, -1, -2) @ g
    dprobs = g @ np.swapaxes(v, -1, -2)
    dscores = softmax_rows_backward(dprobs, probs) * inv_scale
    dq = dscores @ k
    dk = np.swapaxes(dscores, -1, -2) @ q
    if squeeze:
        dq, dk, dv = dq[0], dk[0], dv[0]
    return dq, dk, dv


@dataclass
class MultiHeadAttention:
    """Parallel projected attentions, concatenated and reprojected.

    The block output keeps the input feature width so the residual add is
    well formed: y = layer_norm(x + MHA(x)) by default, or
    x + layer_norm(MHA(x)) when ``norm_then_add`` is set.
    """

    w_q: list[np.ndarray]       # per head, (features, head_size)
    w_k: list[np.ndarray]
    w_v: list[np.ndarray]
    w_out: np.ndarray           # (num_heads * head_size, features)
    b_out: np.ndarray           # (features,)
    norm_gain: np.ndarray       # (features,)
    norm_bias: np.ndarray       # (features,)
    norm_then_add: bool = False
    use_norm: bool = True
    epsilon: float = 1e-5

    def __post_init__(self):
        h, d = self.num_heads, self.head_size
        if h < 1 or d < 1:
            raise ConfigError("attention: need at least one head of size 1")
        if self.w_out.shape[0] != h * d:
            raise ConfigError(
                f"attention: output projection expects {h}*{d}="
                f"{h * d} rows, got {self.w_out.shape}")
        if self.w_out.shape[1] != self.features:
            raise ConfigError(
                f"attention: output projection must map back to "
                f"{self.features} features, got {self.w_out.shape}")

    @property
    def num_heads(self) -> int:
        return len(self.w_q)

    @property
    def head_size(self) -> int:
        return self.w_q[0].shape[1]

    @property
    def features(self) -> int:
        return self.w_q[0].shape[0]

    @classmethod
    def init(cls, rng: np.random.Generator, features: int, num_heads: int,
             head_size: int, norm_then_add: bool = False,
             use_norm: bool = True) -> "MultiHeadAttention":
        w_q = [glorot_uniform(rng, features, head_size)
               for _ in range(num_heads)]
        w_k = [glorot_uniform(rng, features, head_size)
               for _ in range(num_heads)]
        w_v = [glorot_uniform(rng, features, head_size)
               for _ in range(num_heads)]
        w_out = glorot_uniform(rng, num_heads * head_size, features)
        return cls(w_q=w_q, w_k=w_k, w_v=w_v, w_out=w_out,
                   b_out=np.zeros(features), norm_gain=np.ones(features),
                   norm_bias=np.zeros(features),
                   norm_then_add=norm_then_add, use_norm=use_norm)

    def forward(self, x: np.ndarray):
        """x: (batch, steps, features) -> same shape."""
        if x.ndim != 3 or x.shape[-1] != self.features:
            raise ShapeError(
                f"attention: input {x.shape} does not match feature "
                f"dim {self.features}")
        head_outs, head_caches = [], []
        for i in range(self.num_heads):
            q = x @ self.w_q[i]
            k = x @ self.w_k[i]
            v = x @ self.w_v[i]
            out, cache = scaled_dot_product_attention(q, k, v)
            head_outs.append(out)
            head_caches.append(cache)
        concat = np.concatenate(head_outs, axis=-1)
        proj = concat @ self.w_out + self.b_out
        ln_cache = None
        if not self.use_norm:
            y = x + proj
        elif self.norm_then_add:
            normed, ln_cache = layer_norm(proj, self.norm_gain,
                                          self.norm_bias, self.epsilon)
            y = x + normed
        else:
            normed, ln_cache = layer_norm(x + proj, self.norm_gain,
                                          self.norm_bias, self.epsilon)
            y = normed
        weights = [c[3][0] if c[4] else c[3] for c in head_caches]
        return y, (x, head_caches, concat, ln_cache, weights)

    def attention_weights(self, cache) -> list[np.ndarray]:
        """Per-head attention probability matrices from a forward cache."""
        return cache[4]

    def backward(self, g: np.ndarray, cache):
        x, head_caches, concat, ln_cache, _ = cache
        grads: dict[str, np.ndarray] = {}
        if not self.use_norm:
            dx = g.copy()
            dproj = g
        elif self.norm_then_add:
            dx = g.copy()
            dproj, dgain, dbias = layer_norm_backward(g, ln_cache)
            grads["norm_gain"], grads["norm_bias"] = dgain, dbias
        else:
            dpre, dgain, dbias = layer_norm_backward(g, ln_cache)
            grads["norm_gain"], grads["norm_bias"] = dgain, dbias
            dx = dpre.copy()
            dproj = dpre
        d = self.head_size
        flat_concat = concat.reshape(-1, self.num_heads * d)
        flat_dproj = dproj.reshape(-1, self.features)
        grads["out_w"] = flat_concat.T @ flat_dproj
        grads["out_b"] = flat_dproj.sum(axis=0)
        dconcat = dproj @ self.w_out.T
        flat_x = x.reshape(-1, self.features)
        for i in range(self.num_heads):
            dhead = dconcat[..., i * d:(i + 1) * d]
            dq, dk, dv = scaled_dot_product_attention_backward(
                dhead, head_caches[i])
            grads[f"q{i}"] = flat_x.T @ dq.reshape(-1, d)
            grads[f"k{i}"] = flat_x.T @ dk.reshape(-1, d)
            grads[f"v{i}"] = flat_x.T @ dv.reshape(-1, d)
            dx += dq @ self.w_q[i].T
            dx += dk @ self.w_k[i].T
            dx += dv @ self.w_v[i].T
        return dx, grads


@dataclass
class GruCell:
    """Gated recurrent cell.

    Gates: U = sigma(x W_xu + h W_hu + b_u), R = sigma(x W_xr + h W_hr + b_r),
    candidate C = tanh(x W_xc + R * (h W_hc) + b_c), and the new state is
    h' = U * h + (1 - U) * C, with U carrying past state forward.
    """

    w_xu: np.ndarray  # (input_dim, units)
    w_hu: np.ndarray  # (units, units)
    w_xr: np.ndarray
    w_hr: np.ndarray
    w_xc: np.ndarray
    w_hc: np.ndarray
    b_u: np.ndarray   # (units,)
    b_r: np.ndarray
    b_c: np.ndarray

    PARAM_NAMES = ("xu", "hu", "xr", "hr", "xc", "hc", "bu", "br", "bc")

    @property
    def input_dim(self) -> int:
        return self.w_xu.shape[0]

    @property
    def units(self) -> int:
        return self.w_hu.shape[0]

    @classmethod
    def init(cls, rng: np.random.Generator, input_dim: int,
             units: int) -> "GruCell":
        def mat(fan_in):
            return glorot_uniform(rng, fan_in, units)
        return cls(w_xu=mat(input_dim), w_hu=mat(units),
                   w_xr=mat(input_dim), w_hr=mat(units),
                   w_xc=mat(input_dim), w_hc=mat(units),
                   b_u=np.zeros(units), b_r=np.zeros(units),
                   b_c=np.zeros(units))

    def step(self, x_t: np.ndarray, h_prev: np.ndarray):
        if x_t.shape[-1] != self.input_dim:
            raise ShapeError(
                f"gru: input {x_t.shape} does not match input dim "
                f"{self.input_dim}")
        if h_prev.shape[-1] != self.units:
            raise ShapeError(
                f"gru: state {h_prev.shape} does not match units "
                f"{self.units}")
        u = sigmoid(x_t @ self.w_xu + h_prev @ self.w_hu + self.b_u)
        r = sigmoid(x_t @ self.w_xr + h_prev @ self.w_hr + self.b_r)
        hc = h_prev @ self.w_hc
        c = tanh(x_t @ self.w_xc + r * hc + self.b_c)
        h_t = u * h_prev + (1.0 - u) * c
        return h_t, (x_t, h_prev, u, r, hc, c)

    def step_backward(self, g: np.ndarray, cache):
        x_t, h_prev, u, r, hc, c = cache
        du = g * (h_prev - c)
        dc = g * (1.0 - u)
        dh_prev = g * u

        da_c = tanh_backward(dc, c)
        dr = da_c * hc
        dhc = da_c * r
        da_r = sigmoid_backward(dr, r)
        da_u = sigmoid_backward(du, u)

        grads = {
            "xc": x_t.T @ da_c, "hc": h_prev.T @ dhc,
            "bc": da_c.sum(axis=0),
            "xr": x_t.T @ da_r, "hr": h_prev.T @ da_r,
            "br": da_r.sum(axis=0),
            "xu": x_t.T @ da_u, "hu": h_prev.T @ da_u,
            "bu": da_u.sum(axis=0),
        }
        dx = da_c @ self.w_xc.T + da_r @ self.w_xr.T + da_u @ self.w_xu.T
        dh_prev = (dh_prev + dhc @ self.w_hc.T + da_r @ self.w_hr.T
                   + da_u @ self.w_hu.T)
        return dx, dh_prev, grads


def gru_layer_forward(cell: GruCell, x: np.ndarray,
                      return_sequence: bool = True):
    """Run the cell over (batch, steps, features) from a zero state.

    Returns the full hidden sequence or just the final state, plus the
    per-step caches needed for backpropagation through time.
    """
    if x.ndim != 3:
        raise ShapeError(f"gru: expected 3-D sequence batch, got {x.shape}")
    batch, steps, _ = x.shape
    h = np.zeros((batch, cell.units))
    caches = []
    hidden = np.empty((batch, steps, cell.units))
    for t in range(steps):
        h, cache = cell.step(x[:, t, :], h)
        hidden[:, t, :] = h
        caches.append(cache)
    out = hidden if return_sequence else h
    return out, caches


def gru_layer_backward(cell: GruCell, g: np.ndarray, caches,
                       return_sequence: bool = True):
    """Backpropagation through time over the recorded steps."""
    steps = len(caches)
    batch = caches[0][0].shape[0]
    dx = np.empty((batch, steps, cell.input_dim))
    grads = {name: 0.0 for name in GruCell.PARAM_NAMES}
    dh = np.zeros((batch, cell.units))
    for t in reversed(range(steps)):
        if return_sequence:
            dh = dh + g[:, t, :]
        elif t == steps - 1:
            dh = dh + g
        dx_t, dh, step_grads = cell.step_backward(dh, caches[t])
        dx[:, t, :] = dx_t
        for name, value in step_grads.items():
            grads[name] = grads[name] + value
    return dx, grads
