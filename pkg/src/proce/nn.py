"""Dense feed-forward networks in numpy with hand-written backpropagation.

Weights are stored as ``(out, in)`` arrays so a layer computes
``act(x @ W.T + b)`` on a batch of row vectors.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, ParseError, ShapeError, TrainingError, VersionError

FORMAT_VERSION = 1
ACTIVATIONS = ("relu", "sigmoid", "identity")
PROB_CLAMP = 1e-12


_TINY = np.finfo(float).tiny
_ONE_MINUS = 1.0 - np.finfo(float).epsneg


def sigmoid(z):
    # split by sign to avoid overflow in exp
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # keep probabilities strictly inside (0, 1) even where exp saturates
    return np.clip(out, _TINY, _ONE_MINUS)


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return sigmoid(z)
    return z


def _activation_grad(z, a, kind):
    if kind == "relu":
        return (z > 0).astype(float)
    if kind == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


@dataclass
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "relu"
    dropout: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.ndim != 2:
            raise ShapeError(f"weights must be 2-D, got shape {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"bias length {self.bias.shape} does not match {self.weights.shape[0]} output units"
            )
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {self.dropout}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise DomainError("layer parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def glorot(cls, in_dim, out_dim, rng, activation="relu", dropout=0.0):
        limit = math.sqrt(6.0 / (in_dim + out_dim))
        w = rng.uniform(-limit, limit, size=(out_dim, in_dim))
        return cls(w, np.zeros(out_dim), activation, dropout)


class Mlp:
    """A stack of dense layers; also used as encoder/decoder halves."""

    def __init__(self, layers):
        layers = list(layers)
        if not layers:
            raise ShapeError("network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}")
        self.layers = layers

    @classmethod
    def build(cls, sizes, rng, hidden="relu", head="identity", dropout=0.0):
        """Glorot-initialised network with layer widths ``sizes``."""
        layers = []
        for i, (a, b) in enumerate(zip(sizes, sizes[1:])):
            last = i == len(sizes) - 2
            layers.append(
                DenseLayer.glorot(a, b, rng, head if last else hidden, 0.0 if last else dropout)
            )
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def dims(self):
        return [self.input_dim] + [layer.out_dim for layer in self.layers]

    def params(self):
        out = []
        for layer in self.layers:
            out.extend([layer.weights, layer.bias])
        return out

    def copy(self) -> "Mlp":
        return copy.deepcopy(self)

    def _check_input(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = x[None, :] if single else x
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ShapeError(f"expected input of width {self.input_dim}, got shape {x.shape}")
        return X, single

    def forward(self, x):
        """Inference-mode forward pass on a vector or a batch of rows."""
        X, single = self._check_input(x)
        for layer in self.layers:
            X = _activate(X @ layer.weights.T + layer.bias, layer.activation)
        return X[0] if single else X

    __call__ = forward

    def forward_cached(self, X, training=False, rng=None):
        X, _ = self._check_input(X)
        cache = [(X, None, None, None, None)]
        a = X
        for layer in self.layers:
            z = a @ layer.weights.T + layer.bias
            act = _activate(z, layer.activation)
            a, mask = act, None
            if training and layer.dropout > 0.0:
                keep = 1.0 - layer.dropout
                mask = (rng.random(act.shape) < keep) / keep
                a = act * mask
            cache.append((a, z, mask, layer, act))
        return a, cache

    def backward(self, cache, delta, delta_is_pre=False):
        """Backpropagate ``delta`` (dL/d output) through a cached forward pass.

        Returns ``(grads, grad_input)`` where grads pairs with :meth:`params`.
        With ``delta_is_pre`` the delta is already taken w.r.t. the last
        pre-activation (used for sigmoid + cross-entropy).
        """
        grads = []
        for i in range(len(self.layers), 0, -1):
            _, z, mask, layer, act = cache[i]
            a_prev = cache[i - 1][0]
            if not (delta_is_pre and i == len(self.layers)):
                if mask is not None:
                    delta = delta * mask
                delta = delta * _activation_grad(z, act, layer.activation)
            grads.append((delta.T @ a_prev, delta.sum(axis=0)))
            delta = delta @ layer.weights
        flat = []
        for dw, db in reversed(grads):
            flat.extend([dw, db])
        return flat, delta


# -- losses -----------------------------------------------------------------

def cross_entropy(p, y):
    """Binary cross-entropy ``-[y ln p + (1-y) ln(1-p)]`` with clamping."""
    p = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise DomainError(f"probability outside [0, 1]: {p}")
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    out = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(out) if out.ndim == 0 else out


def _loss_and_delta(kind, out, target, net):
    n = out.shape[0]
    if kind == "bce":
        loss = float(np.mean(cross_entropy(out, target)))
        if net.layers[-1].activation == "sigmoid":
            return loss, (out - target) / (n * out.shape[1]), True
        p = np.clip(out, PROB_CLAMP, 1 - PROB_CLAMP)
        return loss, ((p - target) / (p * (1 - p))) / (n * out.shape[1]), False
    if kind == "mse":
        diff = out - target
        return float(np.mean(diff**2)), 2.0 * diff / diff.size, False
    raise ConfigError(f"unknown loss {kind!r}")


# -- optimisation -----------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    loss: str = "bce"

    def validate(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class Optimizer:
    """In-place SGD/Adam over a list of numpy parameter arrays."""

    params: list
    cfg: TrainConfig
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        cfg = self.cfg
        if cfg.optimizer == "sgd":
            for p, g in zip(self.params, grads):
                p -= cfg.learning_rate * g
            return
        self.t += 1
        c1 = 1.0 - cfg.beta1**self.t
        c2 = 1.0 - cfg.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)


def batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train(net: Mlp, X, y, cfg: TrainConfig):
    """Minibatch training on a copy of ``net``; returns ``(net, history)``."""
    cfg.validate()
    X = np.asarray(X, dtype=float)
    Y = np.asarray(y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise ShapeError(f"{X.shape[0]} rows but {Y.shape[0]} targets")
    net = net.copy()
    rng = np.random.default_rng(cfg.seed)
    opt = Optimizer(net.params(), cfg)
    history = []
    for epoch in range(cfg.epochs):
        total = 0.0
        for idx in batches(X.shape[0], cfg.batch_size, rng):
            out, cache = net.forward_cached(X[idx], training=True, rng=rng)
            loss, delta, pre = _loss_and_delta(cfg.loss, out, Y[idx], net)
            if not math.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch + 1} (learning_rate={cfg.learning_rate})"
                )
            grads, _ = net.backward(cache, delta, delta_is_pre=pre)
            opt.step(grads)
            total += loss * len(idx)
        history.append(total / X.shape[0])
    return net, history


# -- verification -----------------------------------------------------------

def _relu_pattern(net, x):
    _, cache = net.forward_cached(x)
    return [c[1] > 0 for c in cache[1:] if c[3].activation == "relu"]


def grad_check(net: Mlp, x, target, h=1e-5, loss="mse", max_entries=None, rng=None):
    """Max relative error between backprop and central finite differences.

    Entries whose ±h perturbation flips a ReLU unit are skipped, since the
    loss is not differentiable there. ``max_entries`` samples that many
    parameter entries per array instead of checking all of them.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.atleast_2d(np.asarray(target, dtype=float))

    def loss_at():
        out, _ = net.forward_cached(x)
        return _loss_and_delta(loss, out, t, net)[0]

    out, cache = net.forward_cached(x)
    _, delta, pre = _loss_and_delta(loss, out, t, net)
    analytic, _ = net.backward(cache, delta, delta_is_pre=pre)
    base_pattern = _relu_pattern(net, x)
    rng = rng or np.random.default_rng(0)

    worst = 0.0
    for p, g in zip(net.params(), analytic):
        flat_idx = np.arange(p.size)
        if max_entries is not None and p.size > max_entries:
            flat_idx = rng.choice(p.size, size=max_entries, replace=False)
        for k in flat_idx:
            idx = np.unravel_index(k, p.shape)
            old = p[idx]
            p[idx] = old + h
            up, up_pat = loss_at(), _relu_pattern(net, x)
            p[idx] = old - h
            down, down_pat = loss_at(), _relu_pattern(net, x)
            p[idx] = old
            if any((a != b).any() for a, b in zip(up_pat, base_pattern)) or any(
                (a != b).any() for a, b in zip(down_pat, base_pattern)
            ):
                continue
            num = (up - down) / (2 * h)
            err = abs(num - g[idx]) / max(abs(num) + abs(g[idx]), 1e-6)
            worst = max(worst, err)
    return worst


# -- serialisation ----------------------------------------------------------

def to_dict(net: Mlp) -> dict:
    return {
        "version": FORMAT_VERSION,
        "input_dim": net.input_dim,
        "layers": [
            {
                "rows": layer.out_dim,
                "cols": layer.in_dim,
                "weights": layer.weights.ravel().tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation,
                "dropout": layer.dropout,
            }
            for layer in net.layers
        ],
    }


def from_dict(doc) -> Mlp:
    if not isinstance(doc, dict) or "version" not in doc:
        raise ParseError("model document lacks a version header")
    if doc["version"] != FORMAT_VERSION:
        raise VersionError(f"unsupported model version {doc['version']!r}, expected {FORMAT_VERSION}")
    try:
        layers = []
        for spec in doc["layers"]:
            w = np.asarray(spec["weights"], dtype=float)
            if w.size != spec["rows"] * spec["cols"]:
                raise ParseError("weight count does not match rows x cols")
            layers.append(
                DenseLayer(
                    w.reshape(spec["rows"], spec["cols"]),
                    np.asarray(spec["bias"], dtype=float),
                    spec["activation"],
                    float(spec["dropout"]),
                )
            )
        net = Mlp(layers)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"malformed model document: {exc}") from exc
    if net.input_dim != doc.get("input_dim", net.input_dim):
        raise ParseError("input_dim does not match first layer")
    return net


def serialize(net: Mlp) -> str:
    return json.dumps(to_dict(net))


def deserialize(text: str) -> Mlp:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model document is not valid JSON: {exc}") from exc
    return from_dict(doc)
