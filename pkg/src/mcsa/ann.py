"""Single-hidden-layer feed-forward classifier for sideband feature vectors.

Hidden units use sigmoid or tanh, the output layer is a softmax trained with
mean cross-entropy by mini-batch gradient descent.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError, DomainError, ParseError, TrainingError
from .motor import FaultLabel

DEFAULT_LABELS = (FaultLabel.HEALTHY, FaultLabel.INTER_TURN_MINOR, FaultLabel.INTER_TURN_SEVERE)
DEFAULT_REJECT_THRESHOLD = 0.6
MODEL_HEADER = "MCSA-MLP v1"
ACTIVATIONS = ("sigmoid", "tanh")


@dataclass
class MlpModel:
    """Weights are stored as (fan_out, fan_in) matrices."""

    layer_sizes: tuple[int, int, int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "sigmoid"
    labels: tuple[FaultLabel, ...] = DEFAULT_LABELS

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        self.labels = tuple(FaultLabel(lbl) for lbl in self.labels)
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if len(self.labels) != self.layer_sizes[-1]:
            raise ConfigurationError(
                f"{len(self.labels)} labels for an output layer of {self.layer_sizes[-1]}"
            )
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_sizes[i + 1], self.layer_sizes[i])
            if w.shape != want or b.shape != (want[0],):
                raise ConfigurationError(f"layer {i + 1}: weight {w.shape}/bias {b.shape}, expected {want}")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)

    def parameters(self) -> list[np.ndarray]:
        return [self.weights[0], self.biases[0], self.weights[1], self.biases[1]]

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 500
    batch_size: int = 16
    seed: int = 0
    l2: float = 0.0

    def __post_init__(self):
        if self.learning_rate < 0 or self.epochs < 1 or self.batch_size < 1 or self.l2 < 0:
            raise ConfigurationError(f"invalid training configuration {self}")


def init_model(
    layer_sizes: Sequence[int],
    activation: str = "sigmoid",
    seed: int = 0,
    labels: Sequence[FaultLabel] | None = None,
) -> MlpModel:
    """Weights ~ N(0, 1/fan_in), zero biases, reproducible for a seed."""
    sizes = [int(n) for n in layer_sizes]
    if len(sizes) != 3:
        raise ConfigurationError(f"expected [inputs, hidden, outputs], got {sizes}")
    if any(n < 1 for n in sizes):
        raise ConfigurationError(f"every layer needs at least one unit, got {sizes}")
    if labels is None:
        if sizes[2] > len(FaultLabel):
            raise ConfigurationError(f"no default labels for {sizes[2]} outputs")
        labels = list(FaultLabel)[: sizes[2]]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(tuple(sizes), weights, biases, activation, tuple(labels))


def _hidden(z, activation):
    if activation == "tanh":
        return np.tanh(z)
    return 0.5 * (1.0 + np.tanh(0.5 * z))  # overflow-free sigmoid


def _hidden_grad(h, activation):
    return 1.0 - h**2 if activation == "tanh" else h * (1.0 - h)


def _softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _is_single(x) -> bool:
    if hasattr(x, "values"):
        return True
    if isinstance(x, (list, tuple)) and x and hasattr(x[0], "values"):
        return False
    return np.ndim(x) == 1


def _as_matrix(m: MlpModel, x) -> np.ndarray:
    if hasattr(x, "values"):
        values = x.values
    elif isinstance(x, (list, tuple)) and x and hasattr(x[0], "values"):
        values = [v.values for v in x]
    else:
        values = x
    arr = np.atleast_2d(np.asarray(values, dtype=float))
    if arr.shape[1] != m.n_inputs:
        raise DomainError(f"model expects {m.n_inputs} features, got {arr.shape[1]}")
    return arr


def _forward(m: MlpModel, X):
    h = _hidden(X @ m.weights[0].T + m.biases[0], m.activation)
    logits = h @ m.weights[1].T + m.biases[1]
    return h, logits


def forward(m: MlpModel, x) -> np.ndarray:
    """Class probabilities, one row per input vector (1-D for a single vector)."""
    X = _as_matrix(m, x)
    probs = _softmax(_forward(m, X)[1])
    return probs[0] if _is_single(x) else probs


def _loss_and_grads(m: MlpModel, X, Y, l2=0.0):
    """Mean cross-entropy and its gradients; Y holds class indices."""
    n = X.shape[0]
    h, logits = _forward(m, X)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_norm[:, None]
    loss = -log_probs[np.arange(n), Y].mean()

    delta_out = np.exp(log_probs)
    delta_out[np.arange(n), Y] -= 1.0
    delta_out /= n
    gW2 = delta_out.T @ h
    gb2 = delta_out.sum(axis=0)
    delta_h = (delta_out @ m.weights[1]) * _hidden_grad(h, m.activation)
    gW1 = delta_h.T @ X
    gb1 = delta_h.sum(axis=0)
    if l2:
        loss += 0.5 * l2 * (np.sum(m.weights[0] ** 2) + np.sum(m.weights[1] ** 2))
        gW1 = gW1 + l2 * m.weights[0]
        gW2 = gW2 + l2 * m.weights[1]
    return float(loss), [gW1, gb1, gW2, gb2]


def _label_indices(m: MlpModel, labels) -> np.ndarray:
    index = {lbl: i for i, lbl in enumerate(m.labels)}
    out = []
    for lbl in labels:
        if isinstance(lbl, (int, np.integer)):
            out.append(int(lbl))
            continue
        try:
            out.append(index[FaultLabel(lbl)])
        except (KeyError, ValueError):
            raise TrainingError(f"label {lbl!r} is not an output of this model") from None
    return np.array(out, dtype=int)


def loss(m: MlpModel, X, y, l2: float = 0.0) -> float:
    X = _as_matrix(m, X)
    return _loss_and_grads(m, X, _label_indices(m, np.atleast_1d(y)), l2)[0]


def train(m: MlpModel, data, cfg: TrainConfig) -> tuple[MlpModel, list[float]]:
    """Mini-batch gradient descent on mean cross-entropy.

    ``data`` is a sequence of labelled FeatureVectors. Batches come from a
    per-epoch permutation drawn from ``default_rng(cfg.seed)``. The loss
    history holds the full-dataset loss after each epoch. The input model is
    left untouched.

    Raises:
        TrainingError: fewer than two distinct labels, or batch larger than data.
        DivergenceError: non-finite loss or parameters, naming the epoch.
    """
    X = _as_matrix(m, data)
    labels = [v.label for v in data]
    if any(lbl is None for lbl in labels):
        raise TrainingError("every training vector needs a label")
    Y = _label_indices(m, labels)
    if len(set(Y.tolist())) < 2:
        raise TrainingError("training needs at least two distinct labels")
    if cfg.batch_size > X.shape[0]:
        raise TrainingError(f"batch_size {cfg.batch_size} exceeds dataset size {X.shape[0]}")

    model = m.copy()
    rng = np.random.default_rng(cfg.seed)
    history = []
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(X.shape[0])
            for start in range(0, X.shape[0], cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                _, grads = _loss_and_grads(model, X[idx], Y[idx], cfg.l2)
                for param, grad in zip(model.parameters(), grads):
                    param -= cfg.learning_rate * grad
            epoch_loss = _loss_and_grads(model, X, Y, cfg.l2)[0]
            if not math.isfinite(epoch_loss) or not model.all_finite():
                raise DivergenceError(epoch)
            history.append(epoch_loss)
    return model, history


def _reference_loss(weights, biases, activation, X, Y) -> np.longdouble:
    """Cross-entropy evaluated independently of backprop, in extended precision."""
    W1, b1, W2, b2 = (np.asarray(p, dtype=np.longdouble) for p in (weights[0], biases[0], weights[1], biases[1]))
    z = X.astype(np.longdouble) @ W1.T + b1
    h = np.tanh(z) if activation == "tanh" else 1 / (1 + np.exp(-z))
    logits = h @ W2.T + b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1))[:, None]
    return -log_probs[np.arange(X.shape[0]), Y].mean()


def gradient_check(m: MlpModel, x, y, epsilon: float = 1e-5) -> float:
    """Worst relative gap between backprop and central differences.

    Every parameter is perturbed by +/-epsilon and the loss re-evaluated in
    extended precision, so roundoff does not swamp small gradients. The
    relative error is ``|g_a - g_n| / max(|g_a|, |g_n|, 1e-12)``.
    """
    if not 0 < epsilon <= 1e-2:
        raise DomainError(f"epsilon must lie in (0, 1e-2], got {epsilon}")
    X = _as_matrix(m, x)
    Y = _label_indices(m, np.atleast_1d(y))
    _, analytic = _loss_and_grads(m, X, Y)
    params = [p.astype(np.longdouble) for p in m.parameters()]
    weights, biases = [params[0], params[2]], [params[1], params[3]]
    eps = np.longdouble(epsilon)
    worst = 0.0
    for param, grad in zip(params, analytic):
        flat, gflat = param.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            up = _reference_loss(weights, biases, m.activation, X, Y)
            flat[i] = saved - eps
            down = _reference_loss(weights, biases, m.activation, X, Y)
            flat[i] = saved
            numeric = float((up - down) / (2 * eps))
            denom = max(abs(gflat[i]), abs(numeric), 1e-12)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst


@dataclass(frozen=True)
class Classification:
    label: FaultLabel
    confidence: float
    uncertain: bool
    probabilities: tuple[float, ...] = field(default=(), repr=False)


def classify(m: MlpModel, x, reject_threshold: float = DEFAULT_REJECT_THRESHOLD) -> Classification:
    """Most probable label; low-confidence answers are flagged ``uncertain``."""
    if not _is_single(x):
        raise DomainError("classify takes a single feature vector")
    probs = forward(m, x)
    best = int(np.argmax(probs))
    conf = float(probs[best])
    return Classification(m.labels[best], conf, conf < reject_threshold, tuple(probs.tolist()))


def accuracy(m: MlpModel, data) -> float:
    if not data:
        return float("nan")
    probs = forward(m, list(data))
    predicted = [m.labels[i] for i in np.argmax(np.atleast_2d(probs), axis=1)]
    return sum(p == v.label for p, v in zip(predicted, data)) / len(data)


# -- model file ------------------------------------------------------------

def _fmt(x) -> str:
    return format(float(x), ".17g")


def format_model(m: MlpModel) -> str:
    lines = [
        MODEL_HEADER,
        "layers " + " ".join(str(n) for n in m.layer_sizes),
        f"activation {m.activation}",
        "labels " + " ".join(lbl.value for lbl in m.labels),
    ]
    for i, (w, b) in enumerate(zip(m.weights, m.biases), start=1):
        lines.append(f"W{i} {w.shape[0]} {w.shape[1]}")
        lines.extend(" ".join(_fmt(v) for v in row) for row in w)
        lines.append(f"b{i} {b.shape[0]}")
        lines.append(" ".join(_fmt(v) for v in b))
    return "\n".join(lines) + "\n"


def parse_model(text: str) -> MlpModel:
    lines = text.splitlines()
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise ParseError("unexpected end of model file", line=pos + 1)
        pos += 1
        return pos, lines[pos - 1].split()

    lineno, tok = take()
    if " ".join(tok) != MODEL_HEADER:
        raise ParseError(f"expected header {MODEL_HEADER!r}", line=lineno)
    try:
        lineno, tok = take()
        sizes = tuple(int(t) for t in tok[1:])
        lineno, tok = take()
        activation = tok[1]
        lineno, tok = take()
        labels = tuple(tok[1:])
        weights, biases = [], []
        for i in (1, 2):
            lineno, tok = take()
            rows, cols = int(tok[1]), int(tok[2])
            w = np.array([[float(v) for v in take()[1]] for _ in range(rows)])
            lineno, tok = take()
            b = np.array([float(v) for v in take()[1]])
            weights.append(w.reshape(rows, cols))
            biases.append(b)
        return MlpModel(sizes, weights, biases, activation, labels)
    except (ValueError, IndexError, ConfigurationError) as exc:
        raise ParseError(f"malformed model block: {exc}", line=lineno) from None


def save_model(m: MlpModel, path) -> None:
    Path(path).write_text(format_model(m))


def load_model(path) -> MlpModel:
    return parse_model(Path(path).read_text())


def split_dataset(data, test_fraction: float = 0.2, seed: int = 0):
    """Stratified train/test split; each label keeps ``test_fraction`` held out."""
    if not 0 < test_fraction < 1:
        raise DomainError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    by_label: dict = {}
    for i, v in enumerate(data):
        by_label.setdefault(v.label, []).append(i)
    train_idx, test_idx = [], []
    for label in sorted(by_label, key=lambda lbl: "" if lbl is None else lbl.value):
        idx = np.array(by_label[label])[rng.permutation(len(by_label[label]))]
        n_test = int(round(test_fraction * idx.size))
        test_idx.extend(idx[:n_test].tolist())
        train_idx.extend(idx[n_test:].tolist())
    return [data[i] for i in sorted(train_idx)], [data[i] for i in sorted(test_idx)]
