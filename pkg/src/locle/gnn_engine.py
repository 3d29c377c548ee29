"""Two-layer GCN trained with cross-entropy, plus round ensembling."""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph_core import Graph, normalized_adjacency


@dataclass(frozen=True)
class GnnHyper:
    hidden_dim: int = 64
    learning_rate: float = 0.01
    dropout_rate: float = 0.5
    epochs: int = 20
    weight_decay: float = 5e-4
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class GnnModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    hyper: GnnHyper = field(default_factory=GnnHyper)
    loss_history: list[float] = field(default_factory=list)

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0, decay_keys=()):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.wd = weight_decay
        self.decay_keys = set(decay_keys)
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            g = grads[k]
            if self.wd and k in self.decay_keys:
                g = g + self.wd * p
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_training_inputs(X, train_nodes, train_labels, n):
    train_nodes = np.asarray(train_nodes, dtype=np.int64)
    train_labels = np.asarray(train_labels, dtype=np.int64)
    if train_nodes.size == 0:
        raise ValueError("empty training set")
    if train_nodes.shape != train_labels.shape:
        raise ValueError("train_nodes and train_labels differ in length")
    if X.shape[0] != n:
        raise ValueError(f"feature matrix has {X.shape[0]} rows, graph has {n} nodes")
    return train_nodes, train_labels


def loss_and_grads(params, A, AX, train_nodes, train_labels, mask=None):
    """Mean cross-entropy over ``train_nodes`` and its parameter gradients.

    ``A`` is the propagation matrix, ``AX = A @ X`` is precomputed. ``mask`` is
    an already-scaled dropout mask on the hidden layer (``None`` disables it).
    """
    W1, b1, W2, b2 = params["W1"], params["b1"], params["W2"], params["b2"]
    Z1 = AX @ W1 + b1
    H1 = np.maximum(Z1, 0.0)
    H1d = H1 * mask if mask is not None else H1
    Z2 = A @ (H1d @ W2) + b2
    P = softmax(Z2)
    m = len(train_nodes)
    loss = -float(np.mean(np.log(P[train_nodes, train_labels] + 1e-300)))

    dZ2 = np.zeros_like(P)
    dZ2[train_nodes] = P[train_nodes]
    dZ2[train_nodes, train_labels] -= 1.0
    dZ2 /= m
    G2 = A.T @ dZ2
    dW2 = H1d.T @ G2
    db2 = dZ2.sum(axis=0)
    dH1 = G2 @ W2.T
    if mask is not None:
        dH1 = dH1 * mask
    dZ1 = dH1 * (Z1 > 0)
    dW1 = AX.T @ dZ1
    db1 = dZ1.sum(axis=0)
    return loss, {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}


def init_model(d_in: int, k: int, hyper: GnnHyper, rng) -> GnnModel:
    h = hyper.hidden_dim
    return GnnModel(
        W1=glorot(rng, d_in, h), b1=np.zeros(h),
        W2=glorot(rng, h, k), b2=np.zeros(k),
        hyper=hyper,
    )


def train_gnn(g: Graph, X, train_nodes, train_labels, hyper: GnnHyper | None = None,
              num_classes: int | None = None) -> GnnModel:
    """Full-graph GCN training on the self-looped normalized adjacency.

    ``num_classes`` defaults to ``max(train_labels) + 1``.
    """
    hyper = hyper or GnnHyper()
    X = np.asarray(X, dtype=np.float64)
    train_nodes, train_labels = _check_training_inputs(X, train_nodes, train_labels, g.n)
    k = int(num_classes) if num_classes is not None else int(train_labels.max()) + 1
    if train_labels.min() < 0 or train_labels.max() >= k:
        raise ValueError(f"training label out of range [0, {k})")
    rng = np.random.default_rng(hyper.seed)
    model = init_model(X.shape[1], k, hyper, rng)
    A = normalized_adjacency(g, add_self_loops=True)
    AX = A @ X
    params = model.params()
    opt = Adam(params, lr=hyper.learning_rate, weight_decay=hyper.weight_decay,
               decay_keys=("W1", "W2"))
    keep = 1.0 - hyper.dropout_rate
    for _ in range(hyper.epochs):
        mask = None
        if hyper.dropout_rate > 0:
            mask = (rng.random((g.n, hyper.hidden_dim)) < keep) / keep
        loss, grads = loss_and_grads(params, A, AX, train_nodes, train_labels, mask)
        model.loss_history.append(loss)
        opt.step(grads)
    return model


def logits(model: GnnModel, g: Graph, X) -> np.ndarray:
    A = normalized_adjacency(g, add_self_loops=True)
    H1 = np.maximum((A @ np.asarray(X, dtype=np.float64)) @ model.W1 + model.b1, 0.0)
    return A @ (H1 @ model.W2) + model.b2


def predict(model: GnnModel, g: Graph, X) -> np.ndarray:
    return softmax(logits(model, g, X))


def ensemble_weights(r: int, alpha: float, reverse: bool = False) -> np.ndarray:
    """Round weights ``(1-alpha)*alpha**l`` normalized to sum to one.

    The common factor cancels, so this is ``alpha**l / sum``; ``alpha = 1``
    gives the uniform average. ``reverse`` mirrors the round order.
    """
    if r < 1:
        raise ValueError("need at least one round")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    ell = np.arange(1, r + 1, dtype=np.float64)
    if reverse:
        ell = ell[::-1]
    logw = (ell - ell.max()) * np.log(alpha)
    w = np.exp(logw)
    return w / w.sum()


def ensemble_predictions(history, alpha: float, reverse: bool = False) -> np.ndarray:
    if len(history) == 0:
        raise ValueError("empty prediction history")
    shape = np.shape(history[0])
    if any(np.shape(Y) != shape for Y in history):
        raise ValueError("prediction matrices differ in shape")
    w = ensemble_weights(len(history), alpha, reverse)
    if len(history) == 1:
        return np.array(history[0], dtype=np.float64)
    out = sum(wi * np.asarray(Y, dtype=np.float64) for wi, Y in zip(w, history))
    return out / out.sum(axis=1, keepdims=True)


_MAGIC = b"LOCM"
_VERSION = 1


def save_model(model: GnnModel, path) -> None:
    """Checkpoint layout: magic, u32 version, u32 hyper-JSON length, JSON,
    then per array (W1, b1, W2, b2): u32 ndim, u32 dims, float32 LE data."""
    hyper = json.dumps(asdict(model.hyper), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<II", _VERSION, len(hyper)) + hyper)
        for arr in (model.W1, model.b1, model.W2, model.b2):
            fh.write(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_model(path) -> GnnModel:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != _MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    version, hlen = struct.unpack_from("<II", buf, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    hyper = GnnHyper(**json.loads(buf[off:off + hlen]))
    off += hlen
    arrays = []
    for _ in range(4):
        (ndim,) = struct.unpack_from("<I", buf, off)
        shape = struct.unpack_from(f"<{ndim}I", buf, off + 4)
        off += 4 + 4 * ndim
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(buf, dtype="<f4", count=count, offset=off)
                      .reshape(shape).astype(np.float64))
        off += 4 * count
    return GnnModel(*arrays, hyper=hyper)
