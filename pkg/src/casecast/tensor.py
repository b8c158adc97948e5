"""Dense numeric kernel: core ops, their analytic backwards, and a checker.

Everything runs in float64. Matrices are 2-D ``np.ndarray``, batched
sequences are 3-D ``(batch, steps, features)``. Each op with a backward
contract comes as a ``<op>`` / ``<op>_backward`` pair; the backward takes the
upstream gradient plus whatever the forward cached.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ConfigError, NumericError, ShapeError


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit conformance check."""
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape} do not conform")
    return a @ b


def matmul_backward(g: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Gradients of ``a @ b``: dA = G B^T, dB = A^T G."""
    return g @ b.T, a.T @ g


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the last axis, stabilized by max subtraction.

    The denominator is accumulated in sorted value order, so the output
    for a row does not depend on how its entries are ordered — permuting
    a row permutes the result bit-for-bit.
    """
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    denom = np.sort(e, axis=-1).sum(axis=-1, keepdims=True)
    return e / denom


def softmax_rows_backward(g: np.ndarray, out: np.ndarray) -> np.ndarray:
    # dX_ij = P_ij * (G_ij - sum_k G_ik P_ik)
    return out * (g - (g * out).sum(axis=-1, keepdims=True))


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
               epsilon: float = 1e-5):
    """Per-row standardization followed by an affine map.

    Returns ``(out, cache)``; feed the cache to :func:`layer_norm_backward`.
    """
    if epsilon <= 0:
        raise ConfigError(f"layer_norm: epsilon must be > 0, got {epsilon}")
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise ShapeError(
            f"layer_norm: gain {gain.shape} / bias {bias.shape} "
            f"do not match feature dim of x {x.shape}")
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + epsilon)
    x_hat = (x - mean) * inv_std
    out = x_hat * gain + bias
    return out, (x_hat, inv_std, gain)


def layer_norm_backward(g: np.ndarray, cache):
    x_hat, inv_std, gain = cache
    n = x_hat.shape[-1]
    dgain = (g * x_hat).reshape(-1, n).sum(axis=0)
    dbias = g.reshape(-1, n).sum(axis=0)
    dx_hat = g * gain
    dx = inv_std / n * (
        n * dx_hat
        - dx_hat.sum(axis=-1, keepdims=True)
        - x_hat * (dx_hat * x_hat).sum(axis=-1, keepdims=True)
    )
    return dx, dgain, dbias


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Piecewise form avoids exp overflow for large |x|.
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(g: np.ndarray, out: np.ndarray) -> np.ndarray:
    return g * out * (1.0 - out)


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def tanh_backward(g: np.ndarray, out: np.ndarray) -> np.ndarray:
    return g * (1.0 - out * out)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(g: np.ndarray, x: np.ndarray) -> np.ndarray:
    return g * (x > 0)


def add(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if x.shape != y.shape:
        raise ShapeError(f"add: shapes {x.shape} and {y.shape} differ")
    return x + y


def hadamard(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if x.shape != y.shape:
        raise ShapeError(f"hadamard: shapes {x.shape} and {y.shape} differ")
    return x * y


_UNARY = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}
_BINARY = {"add": add, "hadamard": hadamard}


def elementwise(x: np.ndarray, kind: str, y: np.ndarray | None = None):
    """Pointwise op dispatcher over {sigmoid, tanh, relu, add, hadamard}."""
    if kind in _UNARY:
        return _UNARY[kind](x)
    if kind in _BINARY:
        if y is None:
            raise ShapeError(f"elementwise: '{kind}' needs a second operand")
        return _BINARY[kind](x, y)
    raise ConfigError(f"elementwise: unknown kind '{kind}'")


class GradTape:
    """Ordered record of forward stages and their backward closures.

    ``backward`` replays every recorded closure exactly once, in reverse
    order, threading the running gradient through the chain. A tape is
    single-use.
    """

    def __init__(self):
        self._entries: list[tuple[str, Callable]] = []
        self._consumed = False

    def record(self, name: str, backward_fn: Callable) -> None:
        if self._consumed:
            raise NumericError("GradTape: cannot record after backward")
        self._entries.append((name, backward_fn))

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def names(self):
        return [name for name, _ in self._entries]

    def backward(self, seed_grad):
        if self._consumed:
            raise NumericError("GradTape: backward may run only once")
        self._consumed = True
        grad = seed_grad
        for _, fn in reversed(self._entries):
            grad = fn(grad)
        return grad


def grad_check(f, params: dict[str, np.ndarray], eps: float = 1e-5) -> float:
    """Compare analytic gradients of a scalar loss to central differences.

    ``f(params) -> (loss, grads)`` where ``grads`` mirrors the keys and
    shapes of ``params``. Returns the max over all parameter entries of
    ``|g_a - g_fd| / max(1, |g_a|, |g_fd|)``.
    """
    if not (0.0 < eps <= 1e-2):
        raise ConfigError(f"grad_check: eps must be in (0, 1e-2], got {eps}")
    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    loss, analytic = f(work)
    if not np.isfinite(loss):
        raise NumericError(f"grad_check: non-finite loss {loss}")
    max_err = 0.0
    for key, arr in work.items():
        grad = np.asarray(analytic[key], dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = f(work)[0]
            flat[i] = orig - eps
            lm = f(work)[0]
            flat[i] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise NumericError(
                    f"grad_check: non-finite loss while perturbing {key}[{i}]")
            fd = (lp - lm) / (2.0 * eps)
            denom = max(1.0, abs(gflat[i]), abs(fd))
            max_err = max(max_err, abs(gflat[i] - fd) / denom)
    return max_err
