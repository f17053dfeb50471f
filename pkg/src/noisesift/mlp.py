"""Small feed-forward classifier trained by SGD with per-sample tracing.

Architecture: input -> ReLU hidden layers -> linear feature layer of
width m -> K logits.  With no hidden layers the feature layer is the
input itself (pass-through) and the model is plain linear-softmax.

Everything is float64 numpy; training is sequential and deterministic
given the seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import ConfigurationError, TrainingDivergedError


@dataclass
class Model:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_count: int
    d: int
    m: int
    K: int

    @property
    def feature_passthrough(self) -> bool:
        # No hidden layers: single output matrix, features are the input.
        return self.hidden_count == 0 and len(self.weights) == 1

    def copy(self) -> "Model":
        return Model(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            hidden_count=self.hidden_count,
            d=self.d,
            m=self.m,
            K=self.K,
        )

    # Convenience wrappers so the model can act as the boundary-shift oracle.
    def predict(self, X: np.ndarray) -> np.ndarray:
        probs, _ = forward_batch(self, np.atleast_2d(X))
        return np.argmax(probs, axis=1)

    def input_gradient(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        return input_gradient(self, X, y)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 80
    batch_size: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")


@dataclass
class TraceStore:
    """Per-epoch per-sample records plus two feature snapshots.

    Arrays with a leading T axis are indexed by epoch-1.
    """

    ids: np.ndarray               # (N,)
    y_assigned: np.ndarray        # (N,)
    loss: np.ndarray              # (T, N)
    pred: np.ndarray              # (T, N) int
    p_pred: np.ndarray            # (T, N)
    p_assigned: np.ndarray        # (T, N)
    p_runner_up: np.ndarray       # (T, N) largest prob excluding predicted
    p_max_other: np.ndarray       # (T, N) largest prob excluding assigned
    train_acc: np.ndarray         # (T,)
    features_mid: np.ndarray      # (N, m)
    features_end: np.ndarray      # (N, m)
    mid_epoch: int

    @property
    def T(self) -> int:
        return self.loss.shape[0]

    @property
    def N(self) -> int:
        return self.loss.shape[1]

    @property
    def m(self) -> int:
        return self.features_end.shape[1]


def init_model(
    d: int, hidden_sizes: list[int], m: int, K: int, seed: int = 0
) -> Model:
    """He-initialized weights into ReLU layers, Xavier into linear ones."""
    if d < 1 or m < 1 or K < 1 or any(s < 1 for s in hidden_sizes):
        raise ConfigurationError("layer widths must be positive")
    rng = np.random.default_rng(seed)
    if not hidden_sizes:
        if m != d:
            raise ConfigurationError(
                "with zero hidden layers the feature layer is the input, "
                f"so m must equal d (got m={m}, d={d})"
            )
        W = rng.standard_normal((d, K)) * math.sqrt(1.0 / d)
        return Model([W], [np.zeros(K)], hidden_count=0, d=d, m=m, K=K)
    sizes = [d] + list(hidden_sizes) + [m, K]
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        relu_layer = i < len(hidden_sizes)
        scale = math.sqrt((2.0 if relu_layer else 1.0) / fan_in)
        weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
        biases.append(np.zeros(fan_out))
    return Model(weights, biases, hidden_count=len(hidden_sizes), d=d, m=m, K=K)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward_batch(
    model: Model, X: np.ndarray, return_cache: bool = False
):
    """Probabilities and feature-layer activations for a batch."""
    if X.shape[1] != model.d:
        raise ConfigurationError(
            f"input dimension {X.shape[1]} != model dimension {model.d}"
        )
    acts = [X]
    a = X
    for i in range(model.hidden_count):
        a = np.maximum(a @ model.weights[i] + model.biases[i], 0.0)
        acts.append(a)
    if model.feature_passthrough:
        features = X
        logits = X @ model.weights[0] + model.biases[0]
    else:
        features = a @ model.weights[model.hidden_count] + model.biases[model.hidden_count]
        acts.append(features)
        logits = features @ model.weights[-1] + model.biases[-1]
    probs = _softmax(logits)
    if return_cache:
        return probs, features, acts
    return probs, features


def forward(model: Model, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Single-sample forward pass: (softmax probabilities, feature vector)."""
    probs, features = forward_batch(model, np.asarray(x, dtype=float)[None, :])
    return probs[0], features[0]


def _backward(
    model: Model, acts: list[np.ndarray], dlogits: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Gradients of all parameters and of the input given d(loss)/d(logits)."""
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    delta = dlogits
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        delta = delta @ model.weights[i].T
        if 0 < i <= model.hidden_count:
            delta = delta * (acts[i] > 0)
    return grads_w, grads_b, delta


def input_gradient(model: Model, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of the per-sample cross-entropy loss w.r.t. the input."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if np.any(y < 0) or np.any(y >= model.K):
        raise ConfigurationError("label out of range")
    probs, _, acts = forward_batch(model, X, return_cache=True)
    dlogits = probs.copy()
    dlogits[np.arange(len(y)), y] -= 1.0
    _, _, dx = _backward(model, acts, dlogits)
    return dx


def train_with_tracing(
    model: Model, dataset: Dataset, cfg: TrainConfig
) -> tuple[Model, TraceStore]:
    """Mini-batch SGD with momentum and weight decay on cross-entropy vs
    y_assigned; traces are taken in a full forward pass at each epoch end.

    The mid-training feature snapshot is captured at the first epoch whose
    end-of-epoch training accuracy reaches 0.5, with epoch ceil(T/2) kept
    as fallback if the threshold is never reached.
    """
    cfg.validate()
    if dataset.K != model.K:
        raise ConfigurationError(
            f"dataset has {dataset.K} classes but model outputs {model.K}"
        )
    if len(dataset) == 0:
        raise ConfigurationError("dataset is empty")
    model = model.copy()
    N, T = len(dataset), cfg.epochs
    X, y = dataset.X, dataset.y_assigned
    rng = np.random.default_rng(cfg.seed)
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]

    loss = np.empty((T, N))
    pred = np.empty((T, N), dtype=np.int64)
    p_pred = np.empty((T, N))
    p_assigned = np.empty((T, N))
    p_runner_up = np.empty((T, N))
    p_max_other = np.empty((T, N))
    train_acc = np.empty(T)
    fallback_epoch = math.ceil(T / 2)
    features_mid = None
    features_fallback = None
    mid_epoch = None

    rows = np.arange(N)
    for t in range(1, T + 1):
        order = rng.permutation(N)
        for start in range(0, N, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            probs, _, acts = forward_batch(model, X[idx], return_cache=True)
            B = len(idx)
            dlogits = probs
            dlogits[np.arange(B), y[idx]] -= 1.0
            dlogits /= B
            gw, gb, _ = _backward(model, acts, dlogits)
            for i in range(len(model.weights)):
                g = gw[i] + cfg.weight_decay * model.weights[i]
                vel_w[i] = cfg.momentum * vel_w[i] + g
                model.weights[i] -= cfg.learning_rate * vel_w[i]
                vel_b[i] = cfg.momentum * vel_b[i] + gb[i]
                model.biases[i] -= cfg.learning_rate * vel_b[i]

        probs, features = forward_batch(model, X)
        e = t - 1
        p_assigned[e] = probs[rows, y]
        loss[e] = -np.log(np.maximum(p_assigned[e], 1e-300))
        pred[e] = np.argmax(probs, axis=1)
        p_pred[e] = probs[rows, pred[e]]
        masked = probs.copy()
        masked[rows, pred[e]] = -np.inf
        p_runner_up[e] = masked.max(axis=1) if model.K > 1 else 0.0
        masked = probs.copy()
        masked[rows, y] = -np.inf
        p_max_other[e] = masked.max(axis=1) if model.K > 1 else 0.0
        train_acc[e] = float(np.mean(pred[e] == y))
        if not np.isfinite(loss[e]).all():
            raise TrainingDivergedError(t)
        if mid_epoch is None and train_acc[e] >= 0.5:
            mid_epoch = t
            features_mid = features.copy()
        if t == fallback_epoch:
            features_fallback = features.copy()

    features_end = features.copy()
    if mid_epoch is None:
        mid_epoch = fallback_epoch
        features_mid = features_fallback

    traces = TraceStore(
        ids=dataset.ids.copy(),
        y_assigned=y.copy(),
        loss=loss,
        pred=pred,
        p_pred=p_pred,
        p_assigned=p_assigned,
        p_runner_up=p_runner_up,
        p_max_other=p_max_other,
        train_acc=train_acc,
        features_mid=features_mid,
        features_end=features_end,
        mid_epoch=mid_epoch,
    )
    return model, traces


def evaluate(model: Model, dataset: Dataset) -> tuple[float, float]:
    """(accuracy, mean cross-entropy loss); test data is scored against
    y_true, train data against y_assigned."""
    if len(dataset) == 0:
        raise ConfigurationError("cannot evaluate on an empty dataset")
    labels = dataset.y_true if dataset.kind == "test" else dataset.y_assigned
    probs, _ = forward_batch(model, dataset.X)
    acc = float(np.mean(np.argmax(probs, axis=1) == labels))
    p = np.maximum(probs[np.arange(len(dataset)), labels], 1e-300)
    return acc, float(np.mean(-np.log(p)))


def save_model(model: Model, path: str | Path) -> None:
    path = Path(path)
    meta = {"hidden_count": model.hidden_count, "d": model.d, "m": model.m, "K": model.K}
    arrays = {}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(path.with_suffix(".npz"), **arrays)
    path.with_suffix(".json").write_text(json.dumps(meta))


def load_model(path: str | Path) -> Model:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    data = np.load(path.with_suffix(".npz"))
    n_layers = len([k for k in data.files if k.startswith("w")])
    return Model(
        weights=[data[f"w{i}"] for i in range(n_layers)],
        biases=[data[f"b{i}"] for i in range(n_layers)],
        hidden_count=meta["hidden_count"],
        d=meta["d"],
        m=meta["m"],
        K=meta["K"],
    )


def save_traces(traces: TraceStore, directory: str | Path, prefix: str = "traces") -> None:
    """Records CSV + two snapshot CSVs + JSON header."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = {"T": traces.T, "N": traces.N, "m": traces.m, "mid_epoch": traces.mid_epoch}
    (directory / f"{prefix}.json").write_text(json.dumps(header))
    with open(directory / f"{prefix}_records.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["epoch", "id", "loss", "pred_class", "p_pred", "p_assigned",
             "p_runner_up", "p_max_other_than_assigned"]
        )
        for t in range(traces.T):
            for i in range(traces.N):
                w.writerow(
                    [t + 1, int(traces.ids[i]), repr(float(traces.loss[t, i])),
                     int(traces.pred[t, i]), repr(float(traces.p_pred[t, i])),
                     repr(float(traces.p_assigned[t, i])),
                     repr(float(traces.p_runner_up[t, i])),
                     repr(float(traces.p_max_other[t, i]))]
                )
    for name, snap in (("mid", traces.features_mid), ("end", traces.features_end)):
        with open(directory / f"{prefix}_features_{name}.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["id"] + [f"f_{j}" for j in range(traces.m)])
            for i in range(traces.N):
                w.writerow([int(traces.ids[i])] + [repr(float(v)) for v in snap[i]])
    np.save(directory / f"{prefix}_train_acc.npy", traces.train_acc)
    np.save(directory / f"{prefix}_y_assigned.npy", traces.y_assigned)


def load_traces(directory: str | Path, prefix: str = "traces") -> TraceStore:
    directory = Path(directory)
    header = json.loads((directory / f"{prefix}.json").read_text())
    T, N, m = header["T"], header["N"], header["m"]
    ids = np.empty(N, dtype=np.int64)
    loss = np.empty((T, N))
    pred = np.empty((T, N), dtype=np.int64)
    p_pred = np.empty((T, N))
    p_assigned = np.empty((T, N))
    p_runner_up = np.empty((T, N))
    p_max_other = np.empty((T, N))
    with open(directory / f"{prefix}_records.csv", newline="") as f:
        r = csv.reader(f)
        next(r)
        row_in_epoch = 0
        epoch = 0
        for rec in r:
            t = int(rec[0]) - 1
            if t != epoch:
                epoch, row_in_epoch = t, 0
            i = row_in_epoch
            if t == 0:
                ids[i] = int(rec[1])
            loss[t, i] = float(rec[2])
            pred[t, i] = int(rec[3])
            p_pred[t, i] = float(rec[4])
            p_assigned[t, i] = float(rec[5])
            p_runner_up[t, i] = float(rec[6])
            p_max_other[t, i] = float(rec[7])
            row_in_epoch += 1

    def _load_snap(name: str) -> np.ndarray:
        snap = np.empty((N, m))
        with open(directory / f"{prefix}_features_{name}.csv", newline="") as f:
            r = csv.reader(f)
            next(r)
            for i, rec in enumerate(r):
                snap[i] = [float(v) for v in rec[1 : 1 + m]]
        return snap

    return TraceStore(
        ids=ids,
        y_assigned=np.load(directory / f"{prefix}_y_assigned.npy"),
        loss=loss,
        pred=pred,
        p_pred=p_pred,
        p_assigned=p_assigned,
        p_runner_up=p_runner_up,
        p_max_other=p_max_other,
        train_acc=np.load(directory / f"{prefix}_train_acc.npy"),
        features_mid=_load_snap("mid"),
        features_end=_load_snap("end"),
        mid_epoch=header["mid_epoch"],
    )
