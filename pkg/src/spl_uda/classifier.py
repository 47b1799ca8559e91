"""The unified linear softmax classifier shared by both domains."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import as_arrays
from .tensor_core import (DenseNet, OptimizerState, RngStream, ShapeError, UsageError, adam_step,
                          cross_entropy_loss, net_backward, net_forward, softmax)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ValueError("epochs, batch_size and learning_rate must be positive")


@dataclass
class ClassifierParams:
    net: DenseNet
    class_count: int
    feature_dim: int
    loss_history: list = field(default_factory=list)  # mean loss before training, then per epoch

    def __post_init__(self):
        if self.class_count < 2:
            raise ValueError("class_count must be at least 2")
        w = self.net.layers[0].weight
        if len(self.net.layers) != 1 or w.shape != (self.feature_dim, self.class_count):
            raise ShapeError(f"classifier must be one affine map {self.feature_dim}->{self.class_count}")

    def logits(self, X: np.ndarray) -> np.ndarray:
        out, _ = net_forward(self.net, X)
        return out


def init_classifier(feature_dim: int, class_count: int, rng: RngStream) -> ClassifierParams:
    net = DenseNet.init([feature_dim, class_count], ["identity"], rng)
    return ClassifierParams(net, class_count, feature_dim)


def fit_arrays(X: np.ndarray, y: np.ndarray, class_count: int, config: TrainConfig,
               rng: RngStream) -> ClassifierParams:
    """Train from scratch on rows of ``X`` (already in canonical order).

    ``rng`` feeds both the weight initialisation and the per-epoch shuffles
    through separate child streams.
    """
    n, d = X.shape
    params = init_classifier(d, class_count, rng.child("init"))
    net = params.net
    state = OptimizerState.for_params(net.parameters(), learning_rate=config.learning_rate)
    shuffle = rng.child("shuffle")

    def full_loss():
        return cross_entropy_loss(softmax(params.logits(X)), y)[0]

    params.loss_history.append(full_loss())
    bs = config.batch_size
    for _ in range(config.epochs):
        order = shuffle.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            out, tape = net_forward(net, X[idx], train_mode=True)
            loss, g = cross_entropy_loss(softmax(out), y[idx])
            total += loss * len(idx)
            grads, _ = net_backward(net, tape, g)
            adam_step(net.parameters(), grads, state)
            net.touch()
        params.loss_history.append(total / n)
    return params


def train_classifier(train_set, config: TrainConfig = TrainConfig(), class_count: int | None = None,
                     stream_tag: str = "classifier") -> ClassifierParams:
    """Fresh classifier trained on labelled samples.

    Samples are put in canonical order (``FeatureSample.sort_key``) first, so
    the result depends only on the set, the config and the stream tag.
    """
    if not train_set:
        raise ValueError("empty training set")
    ordered = sorted(train_set, key=lambda s: s.sort_key)
    dims = {s.features.shape[0] for s in ordered}
    if len(dims) != 1:
        raise ShapeError(f"inconsistent feature dims {sorted(dims)}")
    X, y = as_arrays(ordered)
    if np.any(y < 0):
        raise ValueError("every training sample needs a label")
    if class_count is None:
        class_count = max(2, int(y.max()) + 1)
    if np.any(y >= class_count):
        raise ValueError(f"label out of range [0, {class_count})")
    return fit_arrays(X, y, class_count, config, RngStream(config.seed, stream_tag))


def predict_arrays(params: ClassifierParams, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != params.feature_dim:
        raise ShapeError(f"feature dim {X.shape[1]} != classifier dim {params.feature_dim}")
    p = softmax(params.logits(X))
    cls = np.argmax(p, axis=1)  # first maximum wins ties
    return cls, p[np.arange(len(cls)), cls]


def predict_with_confidence(params: ClassifierParams, features) -> list[tuple[int, float]]:
    cls, conf = predict_arrays(params, features)
    return [(int(c), float(s)) for c, s in zip(cls, conf)]


def evaluate(params: ClassifierParams, labelled_set) -> float:
    if not labelled_set:
        raise ValueError("cannot evaluate on an empty set")
    X, y = as_arrays(labelled_set)
    if np.any(y < 0):
        raise UsageError("evaluation needs labelled samples")
    pred, _ = predict_arrays(params, X)
    return int(np.sum(pred == y)) / len(y)


def save_classifier(params: ClassifierParams, path) -> None:
    doc = {"format": "spl_uda.classifier", "version": CHECKPOINT_VERSION,
           "feature_dim": params.feature_dim, "class_count": params.class_count,
           "net": params.net.to_dict()}
    Path(path).write_text(json.dumps(doc))


def load_classifier(path) -> ClassifierParams:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "spl_uda.classifier" or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} classifier checkpoint")
    return ClassifierParams(DenseNet.from_dict(doc["net"]), doc["class_count"], doc["feature_dim"])
