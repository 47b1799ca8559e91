"""Dense-network substrate: layers with hand-written backprop, losses, Adam and
seeded random streams.

Everything is float64 numpy. A "matrix" is a 2-D ``np.ndarray``; batches are
rows.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from itertools import count

import numpy as np

ACTIVATIONS = ("relu", "identity")


class ShapeError(ValueError):
    pass


class UsageError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

def _tag_words(tag: str) -> list[int]:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 32, 4)]


class RngStream:
    """Counter-based (Philox) random stream keyed by ``(master_seed, purpose_tag)``.

    Two streams with the same key produce identical draws regardless of what
    else was drawn elsewhere; different tags give independent streams.
    """

    def __init__(self, master_seed: int, purpose_tag: str = ""):
        self.master_seed = int(master_seed)
        self.purpose_tag = purpose_tag
        seq = np.random.SeedSequence([self.master_seed & 0xFFFFFFFFFFFFFFFF, *_tag_words(purpose_tag)])
        self.generator = np.random.Generator(np.random.Philox(seq))

    def child(self, *parts) -> "RngStream":
        tag = "/".join([self.purpose_tag, *map(str, parts)]) if self.purpose_tag else "/".join(map(str, parts))
        return RngStream(self.master_seed, tag)

    def normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self.generator.uniform(low, high, size)

    def random(self, size) -> np.ndarray:
        return self.generator.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def integers(self, low: int, high: int, size=None):
        return self.generator.integers(low, high, size)

    def __repr__(self) -> str:
        return f"RngStream({self.master_seed}, {self.purpose_tag!r})"


# ---------------------------------------------------------------------------
# Layers and networks
# ---------------------------------------------------------------------------

@dataclass
class Layer:
    weight: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = "identity"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ShapeError(f"bad layer shapes W{self.weight.shape} b{self.bias.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]


_net_ids = count()


@dataclass
class Tape:
    """Cached activations of one forward pass, consumed by :func:`net_backward`."""
    net_id: int
    version: int
    inputs: list  # input to each layer
    pre: list  # pre-activation of each layer
    masks: list  # dropout multiplier applied after each layer (None if none)


class DenseNet:
    """Stack of affine layers; dropout follows every layer except the last."""

    def __init__(self, layers: list[Layer], dropout_rate: float = 0.0):
        if not layers:
            raise ShapeError("a DenseNet needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        self.layers = layers
        self.dropout_rate = float(dropout_rate)
        self._id = next(_net_ids)
        self._version = 0

    @classmethod
    def init(cls, dims: list[int], activations: list[str], rng: RngStream,
             dropout_rate: float = 0.0) -> "DenseNet":
        """Glorot-uniform weights, zero biases."""
        if len(activations) != len(dims) - 1:
            raise ValueError("need one activation per layer")
        layers = []
        for fan_in, fan_out, act in zip(dims, dims[1:], activations):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append(Layer(rng.uniform(-limit, limit, (fan_in, fan_out)), np.zeros(fan_out), act))
        return cls(layers, dropout_rate)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def touch(self) -> None:
        """Mark parameters as modified; invalidates outstanding tapes."""
        self._version += 1

    def copy(self) -> "DenseNet":
        return DenseNet([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers],
                        self.dropout_rate)

    def to_dict(self) -> dict:
        return {
            "dropout_rate": self.dropout_rate,
            "layers": [
                {"in_dim": l.in_dim, "out_dim": l.out_dim, "activation": l.activation,
                 "weight": l.weight.ravel().tolist(), "bias": l.bias.tolist()}
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNet":
        layers = [
            Layer(np.asarray(l["weight"], dtype=np.float64).reshape(l["in_dim"], l["out_dim"]),
                  np.asarray(l["bias"], dtype=np.float64), l["activation"])
            for l in d["layers"]
        ]
        return cls(layers, d.get("dropout_rate", 0.0))


def net_forward(net: DenseNet, x: np.ndarray, train_mode: bool = False,
                rng: RngStream | None = None) -> tuple[np.ndarray, Tape]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ShapeError(f"input shape {x.shape} does not match net input dim {net.in_dim}")
    p = net.dropout_rate
    use_dropout = train_mode and p > 0.0
    if use_dropout and rng is None:
        raise UsageError("train-mode dropout needs an rng stream")
    inputs, pre, masks = [], [], []
    h = x
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        inputs.append(h)
        a = h @ layer.weight + layer.bias
        pre.append(a)
        h = np.maximum(a, 0.0) if layer.activation == "relu" else a
        mask = None
        if use_dropout and i < last:
            mask = (rng.random(h.shape) >= p) / (1.0 - p)
            h = h * mask
        masks.append(mask)
    return h, Tape(net._id, net._version, inputs, pre, masks)


def net_backward(net: DenseNet, tape: Tape | None, output_gradient: np.ndarray
                 ) -> tuple[list[np.ndarray], np.ndarray]:
    """Return (parameter gradients in ``net.parameters()`` order, input gradient)."""
    if tape is None:
        raise UsageError("net_backward needs the tape of a matching forward pass")
    if tape.net_id != net._id or tape.version != net._version:
        raise UsageError("stale tape: network changed since the forward pass")
    g = np.asarray(output_gradient, dtype=np.float64)
    if g.shape != tape.pre[-1].shape:
        raise ShapeError(f"output gradient shape {g.shape} != output shape {tape.pre[-1].shape}")
    grads: list[np.ndarray] = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if tape.masks[i] is not None:
            g = g * tape.masks[i]
        if layer.activation == "relu":
            g = g * (tape.pre[i] > 0.0)
        grads[2 * i] = tape.inputs[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ layer.weight.T
    return grads, g


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction; accepts a vector or a matrix."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss(probabilities: np.ndarray, targets) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient w.r.t. the logits.

    ``targets`` is either an integer label vector or a one-hot matrix.
    """
    p = np.atleast_2d(np.asarray(probabilities, dtype=np.float64))
    n, c = p.shape
    t = np.asarray(targets)
    if t.ndim == 1:
        if t.shape[0] != n:
            raise ShapeError("one target per row required")
        if np.any(t < 0) or np.any(t >= c):
            raise UsageError(f"target index out of range [0, {c})")
        y = np.zeros_like(p)
        y[np.arange(n), t.astype(int)] = 1.0
    else:
        if t.shape != p.shape:
            raise ShapeError(f"target shape {t.shape} != probability shape {p.shape}")
        y = t.astype(np.float64)
    picked = np.sum(p * y, axis=1)
    loss = float(-np.mean(np.log(np.maximum(picked, np.finfo(np.float64).tiny))))
    return max(loss, 0.0), (p - y) / n


def mse_loss(prediction: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Per-sample sum of squared errors averaged over the batch."""
    pred = np.atleast_2d(np.asarray(prediction, dtype=np.float64))
    tgt = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if pred.shape != tgt.shape:
        raise ShapeError(f"prediction {pred.shape} vs target {tgt.shape}")
    diff = pred - tgt
    n = pred.shape[0]
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

@dataclass
class OptimizerState:
    m: list
    v: list
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                   0, learning_rate, beta1, beta2, epsilon)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: OptimizerState) -> None:
    """In-place Adam update with bias correction."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and optimizer state must align")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeError(f"grad shape {g.shape} != param shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
