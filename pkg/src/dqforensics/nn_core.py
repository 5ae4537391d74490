"""A small numpy 1-D CNN: conv, max-pool, dense, ReLU, softmax cross-entropy.

Activations are (batch, length, channels) arrays. Every layer caches what its
backward pass needs during ``forward``; call ``backward`` once per forward.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np


class NumericError(ArithmeticError):
    """Non-finite values appeared in a forward or backward pass."""


class ModelFormatError(ValueError):
    pass


def check_finite(x: np.ndarray, where: str) -> np.ndarray:
    if not np.isfinite(x).all():
        raise NumericError(f"non-finite values in {where}")
    return x


# ----------------------------------------------------------------- functional


def _windows(x: np.ndarray, kernel: int, stride: int, out_len: int):
    """Yield, for each kernel tap k, the strided slice x[:, k + stride*i]."""
    span = stride * (out_len - 1) + 1
    for k in range(kernel):
        yield x[:, k:k + span:stride]


def conv_out_len(in_len: int, kernel: int, stride: int) -> int:
    if in_len < kernel:
        raise ValueError(f"input length {in_len} shorter than kernel {kernel}")
    return (in_len - kernel) // stride + 1


def conv1d_forward(x, weight, bias, stride=1):
    """Valid cross-correlation summed over input channels.

    x: (B, L, Cin); weight: (K, Cin, Cout); bias: (Cout,).
    """
    kernel, cin, cout = weight.shape
    if x.ndim != 3 or x.shape[2] != cin:
        raise ValueError(f"conv expects (B, L, {cin}) input, got {x.shape}")
    out_len = conv_out_len(x.shape[1], kernel, stride)
    cols = np.concatenate(list(_windows(x, kernel, stride, out_len)), axis=2)
    out = cols @ weight.reshape(kernel * cin, cout) + bias
    return out, cols


def conv1d_backward(x_shape, cols, weight, grad_out, stride=1):
    """Returns (grad_x, grad_weight, grad_bias)."""
    kernel, cin, cout = weight.shape
    b, out_len, _ = grad_out.shape
    g2 = grad_out.reshape(-1, cout)
    grad_w = (cols.reshape(-1, kernel * cin).T @ g2).reshape(kernel, cin, cout)
    grad_b = g2.sum(axis=0)
    gcols = grad_out @ weight.reshape(kernel * cin, cout).T
    grad_x = np.zeros(x_shape, dtype=grad_out.dtype)
    span = stride * (out_len - 1) + 1
    for k in range(kernel):
        grad_x[:, k:k + span:stride] += gcols[:, :, k * cin:(k + 1) * cin]
    return grad_x, grad_w, grad_b


def maxpool1d_forward(x, window=3, stride=2):
    """Floor-mode max pooling. Returns (out, argmax) with earliest-index ties."""
    out_len = conv_out_len(x.shape[1], window, stride)
    stacked = np.stack(list(_windows(x, window, stride, out_len)), axis=2)
    arg = stacked.argmax(axis=2)
    out = np.take_along_axis(stacked, arg[:, :, None, :], axis=2)[:, :, 0, :]
    return out, arg


def maxpool1d_backward(x_shape, arg, grad_out, window=3, stride=2):
    grad_x = np.zeros(x_shape, dtype=grad_out.dtype)
    span = stride * (grad_out.shape[1] - 1) + 1
    for k in range(window):
        grad_x[:, k:k + span:stride] += np.where(arg == k, grad_out, 0)
    return grad_x


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, labels):
    """Softmax probabilities, mean cross-entropy, and d(loss)/d(logits).

    ``logits`` is (B, C) or (C,); ``labels`` are class indices.
    """
    logits = np.asarray(logits)
    single = logits.ndim == 1
    if single:
        logits = logits[None, :]
    check_finite(logits, "logits")
    labels = np.asarray(labels, dtype=np.intp).reshape(-1)
    if labels.shape[0] != logits.shape[0]:
        raise ValueError("one label per row of logits is required")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    probs = np.exp(logp)
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1
    grad /= n
    if single:
        return probs[0], float(loss), grad[0]
    return probs, float(loss), grad


# ---------------------------------------------------------------- layers


def xavier_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv1d:
    tag = 1

    def __init__(self, in_channels, out_channels, kernel=3, stride=1, rng=None, dtype=np.float32):
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride = kernel, stride
        rng = rng if rng is not None else np.random.default_rng()
        self.weight = xavier_uniform(rng, (kernel, in_channels, out_channels),
                                     in_channels * kernel, out_channels * kernel, dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)

    @property
    def hyper(self):
        return (self.in_channels, self.out_channels, self.kernel, self.stride)

    def out_shape(self, shape):
        length, channels = shape
        if channels != self.in_channels:
            raise ValueError(f"conv expects {self.in_channels} channels, got {channels}")
        return (conv_out_len(length, self.kernel, self.stride), self.out_channels)

    def forward(self, x):
        self._x_shape = x.shape
        out, self._cols = conv1d_forward(x, self.weight, self.bias, self.stride)
        return out

    def backward(self, grad):
        gx, self.grad_weight, self.grad_bias = conv1d_backward(
            self._x_shape, self._cols, self.weight, grad, self.stride)
        return gx

    def params(self):
        return [self.weight, self.bias]

    def grads(self):
        return [self.grad_weight, self.grad_bias]


class MaxPool1d:
    tag = 2

    def __init__(self, window=3, stride=2):
        self.window, self.stride = window, stride

    @property
    def hyper(self):
        return (self.window, self.stride, 0, 0)

    def out_shape(self, shape):
        length, channels = shape
        return (conv_out_len(length, self.window, self.stride), channels)

    def forward(self, x):
        self._x_shape = x.shape
        out, self._arg = maxpool1d_forward(x, self.window, self.stride)
        return out

    def backward(self, grad):
        return maxpool1d_backward(self._x_shape, self._arg, grad, self.window, self.stride)

    def params(self):
        return []

    def grads(self):
        return []


class Flatten:
    tag = 5
    hyper = (0, 0, 0, 0)

    def out_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x):
        self._x_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._x_shape)

    def params(self):
        return []

    def grads(self):
        return []


class Dense:
    tag = 3

    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        self.in_features, self.out_features = in_features, out_features
        rng = rng if rng is not None else np.random.default_rng()
        self.weight = xavier_uniform(rng, (in_features, out_features), in_features, out_features, dtype)
        self.bias = np.zeros(out_features, dtype=dtype)

    @property
    def hyper(self):
        return (self.in_features, self.out_features, 0, 0)

    def out_shape(self, shape):
        if shape != (self.in_features,):
            raise ValueError(f"dense expects ({self.in_features},) input, got {shape}")
        return (self.out_features,)

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(f"dense expects (B, {self.in_features}) input, got {x.shape}")
        self._x = x
        return x @ self.weight + self.bias

    def backward(self, grad):
        self.grad_weight = self._x.T @ grad
        self.grad_bias = grad.sum(axis=0)
        return grad @ self.weight.T

    def params(self):
        return [self.weight, self.bias]

    def grads(self):
        return [self.grad_weight, self.grad_bias]


class ReLU:
    tag = 4
    hyper = (0, 0, 0, 0)

    def out_shape(self, shape):
        return shape

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad):
        return np.where(self._mask, grad, 0).astype(grad.dtype, copy=False)

    def params(self):
        return []

    def grads(self):
        return []


def relu(x):
    return np.maximum(x, 0)


# ---------------------------------------------------------------- network


class Network:
    """Sequential stack ending in class logits; softmax lives in the loss."""

    def __init__(self, layers, input_len, input_channels=1, dtype=np.float32):
        self.layers = list(layers)
        self.input_len = input_len
        self.input_channels = input_channels
        self.dtype = np.dtype(dtype)
        self.shape_chain()  # validates the stack

    def shape_chain(self) -> list[tuple]:
        shape = (self.input_len, self.input_channels)
        chain = [shape]
        for layer in self.layers:
            shape = layer.out_shape(shape)
            chain.append(shape)
        return chain

    @property
    def n_classes(self) -> int:
        return self.shape_chain()[-1][0]

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def grads(self):
        return [g for layer in self.layers for g in layer.grads()]

    def _prep(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim == 2:
            x = x[:, :, None]
        if x.shape[1:] != (self.input_len, self.input_channels):
            raise ValueError(f"network expects inputs of length {self.input_len}, got {x.shape}")
        return check_finite(x, "network input")

    def forward(self, x):
        out = self._prep(x)
        for layer in self.layers:
            out = layer.forward(out)
        return check_finite(out, "network output")

    def backward(self, grad_logits):
        grad = np.asarray(grad_logits, dtype=self.dtype)
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def loss_and_grads(self, x, labels):
        logits = self.forward(x)
        probs, loss, grad = softmax_xent(logits, labels)
        self.backward(grad)
        return loss, probs

    def predict_proba(self, x, batch_size=256) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim == 1:
            x = x[None, :]
        out = np.empty((x.shape[0], self.n_classes), dtype=np.float64)
        for i in range(0, x.shape[0], batch_size):
            out[i:i + batch_size] = softmax(self.forward(x[i:i + batch_size]).astype(np.float64))
        return out

    def kink_margin(self, x) -> float:
        """Smallest distance of any ReLU input from 0 or any pool max from its runner-up."""
        out = self._prep(x)
        margin = np.inf
        for layer in self.layers:
            if isinstance(layer, ReLU):
                margin = min(margin, float(np.abs(out).min()))
            elif isinstance(layer, MaxPool1d):
                n = conv_out_len(out.shape[1], layer.window, layer.stride)
                stacked = np.sort(np.stack(list(_windows(out, layer.window, layer.stride, n)), axis=2), axis=2)
                margin = min(margin, float((stacked[:, :, -1] - stacked[:, :, -2]).min()))
            out = layer.forward(out)
        return margin


def build_network(maps=100, kernel=3, hidden=1000, n_conv=2, input_len=279, n_classes=2,
                  pool_window=3, pool_stride=2, rng=None, dtype=np.float32) -> Network:
    """The per-scale classifier: (conv, pool) x n_conv, then three dense layers."""
    rng = rng if rng is not None else np.random.default_rng()
    layers = []
    length, channels = input_len, 1
    for _ in range(n_conv):
        layers.append(Conv1d(channels, maps, kernel, 1, rng=rng, dtype=dtype))
        layers.append(MaxPool1d(pool_window, pool_stride))
        length = conv_out_len(conv_out_len(length, kernel, 1), pool_window, pool_stride)
        channels = maps
    layers += [
        Flatten(),
        Dense(length * channels, hidden, rng=rng, dtype=dtype), ReLU(),
        Dense(hidden, hidden, rng=rng, dtype=dtype), ReLU(),
        Dense(hidden, n_classes, rng=rng, dtype=dtype),
    ]
    return Network(layers, input_len, 1, dtype)


# ---------------------------------------------------------------- training


@dataclass
class TrainConfig:
    learning_rate: float = 0.0005
    batch_size: int = 200
    momentum: float = 0.9
    epochs: int = 20
    seed: int = 0
    # sets with fewer than small_set_steps full batches train at small_batch_size
    small_batch_size: int = 32
    small_set_steps: int = 10

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning rate, batch size and epochs must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")

    def effective_batch_size(self, n_train: int) -> int:
        if n_train < self.small_set_steps * self.batch_size:
            return min(self.batch_size, self.small_batch_size)
        return self.batch_size


def sgd_step(params, grads, velocity, cfg: TrainConfig):
    """Classical momentum, in place: v <- m*v - lr*g; p <- p + v."""
    for p, g, v in zip(params, grads, velocity):
        v *= cfg.momentum
        v -= cfg.learning_rate * g
        p += v
    return params


def accuracy(net: Network, x, y) -> float:
    if len(y) == 0:
        return float("nan")
    return float((net.predict_proba(x).argmax(axis=1) == np.asarray(y)).mean())


def train_network(net: Network, x, y, cfg: TrainConfig, x_val=None, y_val=None,
                  log: Callable[[dict], None] | None = None, rng=None) -> list[dict]:
    """Mini-batch SGD with momentum. Returns one metrics dict per epoch.

    Shuffling draws from ``rng`` if given, else from ``cfg.seed``.
    """
    x = np.asarray(x, dtype=net.dtype)
    y = np.asarray(y, dtype=np.intp)
    if len(x) == 0:
        raise ValueError("empty training set")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    batch = cfg.effective_batch_size(len(x))
    velocity = [np.zeros_like(p) for p in net.params()]
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(x))
        losses, correct = [], 0
        for i in range(0, len(order), batch):
            idx = order[i:i + batch]
            loss, probs = net.loss_and_grads(x[idx], y[idx])
            sgd_step(net.params(), net.grads(), velocity, cfg)
            losses.append(loss * len(idx))
            correct += int((probs.argmax(axis=1) == y[idx]).sum())
        row = {"epoch": epoch, "batch_size": batch,
               "train_loss": float(np.sum(losses) / len(x)),
               "train_acc": correct / len(x)}
        if x_val is not None and len(x_val):
            probs = net.predict_proba(x_val)
            yv = np.asarray(y_val, dtype=np.intp)
            row["val_loss"] = float(-np.log(np.clip(probs[np.arange(len(yv)), yv], 1e-300, None)).mean())
            row["val_acc"] = float((probs.argmax(axis=1) == yv).mean())
        history.append(row)
        if log is not None:
            log(row)
    return history


# ---------------------------------------------------------------- gradient check


def grad_check(net: Network, x, label, eps: float = 1e-4) -> float:
    """Max relative error of backprop vs central differences over all parameters.

    Relative error per entry is |a - n| / max(|a| + |n|, 1e-6).
    """
    x = np.asarray(x)[None, ...] if np.asarray(x).ndim == 1 else np.asarray(x)
    labels = np.atleast_1d(label)

    def loss_at():
        _, loss, _ = softmax_xent(net.forward(x).astype(np.float64), labels)
        return loss

    net.loss_and_grads(x, labels)
    analytic = [g.astype(np.float64).copy() for g in net.grads()]
    worst = 0.0
    for p, a in zip(net.params(), analytic):
        flat = p.reshape(-1)
        af = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_at()
            flat[i] = orig - eps
            down = loss_at()
            flat[i] = orig
            num = (up - down) / (2 * eps)
            err = abs(af[i] - num) / max(abs(af[i]) + abs(num), 1e-6)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------- persistence

MODEL_MAGIC = b"MSDN"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sIII")  # magic, version, layer count, input length
_LAYER_RECORD = struct.Struct("<IIIIIII")  # tag, 4 hyperparameters, weight len, bias len
_LAYER_TYPES = {cls.tag: cls for cls in (Conv1d, MaxPool1d, Dense, ReLU, Flatten)}


def model_to_bytes(net: Network) -> bytes:
    out = [_MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, len(net.layers), net.input_len)]
    payload = []
    for layer in net.layers:
        params = layer.params()
        wlen = params[0].size if params else 0
        blen = params[1].size if params else 0
        out.append(_LAYER_RECORD.pack(layer.tag, *layer.hyper, wlen, blen))
        payload += [p.astype("<f4").tobytes() for p in params]
    return b"".join(out + payload)


def model_from_bytes(data: bytes) -> Network:
    if len(data) < _MODEL_HEADER.size:
        raise ModelFormatError("truncated model header")
    magic, version, n_layers, input_len = _MODEL_HEADER.unpack_from(data)
    if magic != MODEL_MAGIC:
        raise ModelFormatError(f"bad model magic {magic!r}")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported version {version}")
    pos = _MODEL_HEADER.size
    if len(data) < pos + n_layers * _LAYER_RECORD.size:
        raise ModelFormatError("truncated layer table")
    records = []
    for _ in range(n_layers):
        records.append(_LAYER_RECORD.unpack_from(data, pos))
        pos += _LAYER_RECORD.size
    layers = []
    for tag, h0, h1, h2, h3, wlen, blen in records:
        if tag not in _LAYER_TYPES:
            raise ModelFormatError(f"unknown layer tag {tag}")
        if tag == Conv1d.tag:
            layer = Conv1d(h0, h1, h2, h3, rng=np.random.default_rng(0))
        elif tag == Dense.tag:
            layer = Dense(h0, h1, rng=np.random.default_rng(0))
        elif tag == MaxPool1d.tag:
            layer = MaxPool1d(h0, h1)
        else:
            layer = _LAYER_TYPES[tag]()
        params = layer.params()
        if (wlen, blen) != ((params[0].size, params[1].size) if params else (0, 0)):
            raise ModelFormatError(f"parameter size mismatch in layer tag {tag}")
        for p in params:
            nbytes = 4 * p.size
            if pos + nbytes > len(data):
                raise ModelFormatError("truncated parameter payload")
            p[...] = np.frombuffer(data, dtype="<f4", count=p.size, offset=pos).reshape(p.shape)
            pos += nbytes
        layers.append(layer)
    if pos != len(data):
        raise ModelFormatError("trailing bytes after parameter payload")
    try:
        return Network(layers, input_len, 1, np.float32)
    except ValueError as exc:
        raise ModelFormatError(f"inconsistent layer shapes: {exc}") from None


def save_model(net: Network, path) -> None:
    Path(path).write_bytes(model_to_bytes(net))


def load_model(path) -> Network:
    return model_from_bytes(Path(path).read_bytes())
