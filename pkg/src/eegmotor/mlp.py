"""From-scratch multilayer perceptron, trained with Adam.

Architecture: dense layers [n_features, 700, 128, 128, 64, 64, 32, 32, 4]
with ReLU hidden activations and a softmax output, Glorot-uniform weights,
zero biases, sparse categorical cross-entropy loss, and accuracy plus a
mean-squared-error-vs-one-hot metric. Everything runs in 64-bit floats and
is deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .validation import as_float_matrix, as_label_vector, check_fitted

DEFAULT_HIDDEN = (700, 128, 128, 64, 64, 32, 32)
N_CLASSES = 4


class TrainingDiverged(RuntimeError):
    """Loss became NaN/Inf during training."""


@dataclass
class MlpParams:
    """Per-layer weight matrices (in x out) and bias vectors."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "MlpParams":
        return MlpParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def init_mlp(layer_sizes, seed: int = 0) -> MlpParams:
    """Glorot-uniform weights, U(+-sqrt(6/(fan_in+fan_out))); zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ValueError(f"need at least input and output sizes, got {sizes}")
    if any(s < 1 for s in sizes):
        raise ValueError(f"layer sizes must be >= 1, got {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights=weights, biases=biases)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by subtracting the row max."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(params: MlpParams, X: np.ndarray,
            ) -> tuple[np.ndarray, list[np.ndarray]]:
    """Class probabilities plus cached layer activations for backprop.

    The cache holds the input and every post-activation hidden output; the
    last entry is the softmax output.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.weights[0].shape[0]:
        raise ValueError(
            f"input width {X.shape} does not match first layer size "
            f"{params.weights[0].shape[0]}"
        )
    activations = [X]
    h = X
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        h = softmax(z) if i == last else relu(z)
        activations.append(h)
    return h, activations


def predict_proba(params: MlpParams, X: np.ndarray) -> np.ndarray:
    probs, _ = forward(params, X)
    return probs


def predict(params: MlpParams, X: np.ndarray) -> np.ndarray:
    """Argmax class labels; ties break toward the lowest class index."""
    return np.argmax(predict_proba(params, X), axis=1)


def _loss_grad_probs(params: MlpParams, X: np.ndarray, y: np.ndarray,
                     ) -> tuple[float, MlpParams, np.ndarray]:
    y = as_label_vector(y, n_classes=params.weights[-1].shape[1])
    probs, activations = forward(params, X)
    batch = X.shape[0]
    p_true = probs[np.arange(batch), y]
    loss = float(np.mean(-np.log(np.maximum(p_true, 1e-300))))

    delta = probs.copy()
    delta[np.arange(batch), y] -= 1.0
    delta /= batch

    grad_w = [np.empty(0)] * params.n_layers
    grad_b = [np.empty(0)] * params.n_layers
    for i in range(params.n_layers - 1, -1, -1):
        grad_w[i] = activations[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ params.weights[i].T
            delta *= activations[i] > 0  # ReLU mask
    return loss, MlpParams(weights=grad_w, biases=grad_b), probs


def loss_and_grad(params: MlpParams, X: np.ndarray, y: np.ndarray,
                  ) -> tuple[float, MlpParams]:
    """Mean cross-entropy -ln p[true] and its gradients for every parameter.

    Softmax + cross-entropy collapse to an output delta of (p - onehot)/B;
    ReLU layers mask the upstream deltas where their output was zero.
    """
    loss, grads, _ = _loss_grad_probs(params, X, y)
    return loss, grads


@dataclass
class AdamState:
    """First/second moment accumulators and the Adam hyperparameters."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    t: int = 0
    m: MlpParams | None = None
    v: MlpParams | None = None

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 0.001, beta1: float = 0.9,
                   beta2: float = 0.999, epsilon: float = 1e-7) -> "AdamState":
        zeros = lambda: MlpParams(
            weights=[np.zeros_like(w) for w in params.weights],
            biases=[np.zeros_like(b) for b in params.biases],
        )
        return cls(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon,
                   t=0, m=zeros(), v=zeros())


def adam_step(params: MlpParams, state: AdamState, grads: MlpParams,
              ) -> tuple[MlpParams, AdamState]:
    """One Adam update, in place: m and v decay toward g and g**2, the
    bias-corrected ratio scales the step."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.t
    correction2 = 1.0 - b2**state.t
    for part in ("weights", "biases"):
        for theta, m, v, g in zip(getattr(params, part), getattr(state.m, part),
                                  getattr(state.v, part), getattr(grads, part)):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / correction1
            v_hat = v / correction2
            theta -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class TrainHistory:
    """Per-epoch running training metrics and end-of-epoch validation ones."""

    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)
    mse: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def __len__(self) -> int:
        return len(self.loss)


def _batch_metrics(probs: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """(accuracy, mse-vs-one-hot) of one probability batch."""
    correct = float(np.mean(np.argmax(probs, axis=1) == y))
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(y)), y] = 1.0
    mse = float(np.mean((probs - onehot) ** 2))
    return correct, mse


def evaluate_loss(params: MlpParams, X: np.ndarray, y: np.ndarray,
                  ) -> tuple[float, float]:
    """(mean cross-entropy, accuracy) without touching gradients."""
    probs = predict_proba(params, X)
    y = as_label_vector(y, n_classes=probs.shape[1])
    p_true = probs[np.arange(len(y)), y]
    loss = float(np.mean(-np.log(np.maximum(p_true, 1e-300))))
    return loss, float(np.mean(np.argmax(probs, axis=1) == y))


def train(X: np.ndarray, y: np.ndarray, train_idx, val_idx,
          config: TrainConfig = TrainConfig(),
          hidden=DEFAULT_HIDDEN, n_classes: int = N_CLASSES,
          lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
          epsilon: float = 1e-7, init_seed: int | None = None,
          ) -> tuple[MlpParams, TrainHistory]:
    """Full training loop; returns the best-validation-accuracy checkpoint.

    Each epoch reshuffles the training rows (seeded), walks mini-batches of
    `batch_size` including the final partial one, and records the running
    train loss/accuracy/MSE plus end-of-epoch validation loss/accuracy.
    With no validation rows the final parameters are returned.
    """
    X = as_float_matrix(X)
    y = as_label_vector(y, n_classes=n_classes)
    train_idx = np.asarray(train_idx, dtype=np.int64)
    val_idx = np.asarray(val_idx, dtype=np.int64) if val_idx is not None else np.empty(0, np.int64)
    if train_idx.size == 0:
        raise ValueError("training split is empty")

    layer_sizes = [X.shape[1], *hidden, n_classes]
    params = init_mlp(layer_sizes, seed=config.seed if init_seed is None else init_seed)
    state = AdamState.for_params(params, lr=lr, beta1=beta1, beta2=beta2,
                                 epsilon=epsilon)
    rng = np.random.default_rng(config.seed)
    history = TrainHistory()
    best = params.copy()
    best_acc = -np.inf

    X_train, y_train = X[train_idx], y[train_idx]
    X_val = X[val_idx] if val_idx.size else None
    y_val = y[val_idx] if val_idx.size else None

    for epoch in range(config.epochs):
        order = rng.permutation(len(X_train)) if config.shuffle else np.arange(len(X_train))
        seen = 0
        loss_sum = acc_sum = mse_sum = 0.0
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo : lo + config.batch_size]
            xb, yb = X_train[batch], y_train[batch]
            loss, grads, probs = _loss_grad_probs(params, xb, yb)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss} at epoch {epoch}, batch {lo // config.batch_size}"
                )
            acc, mse = _batch_metrics(probs, yb)
            adam_step(params, state, grads)
            loss_sum += loss * len(batch)
            acc_sum += acc * len(batch)
            mse_sum += mse * len(batch)
            seen += len(batch)
        history.loss.append(loss_sum / seen)
        history.accuracy.append(acc_sum / seen)
        history.mse.append(mse_sum / seen)

        if X_val is not None:
            val_loss, val_acc = evaluate_loss(params, X_val, y_val)
        else:
            val_loss, val_acc = float("nan"), float("nan")
        history.val_loss.append(val_loss)
        history.val_accuracy.append(val_acc)

        track = val_acc if X_val is not None else history.accuracy[-1]
        if track > best_acc:
            best_acc = track
            best = params.copy()
            history.best_epoch = epoch

    return best, history


class MlpClassifier(ClassifierMixin, BaseEstimator):
    """sklearn-style wrapper around the training loop."""

    def __init__(self, hidden_sizes=DEFAULT_HIDDEN, epochs: int = 100,
                 batch_size: int = 64, lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-7,
                 shuffle: bool = True, random_state: int = 0):
        self.hidden_sizes = hidden_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.shuffle = shuffle
        self.random_state = random_state
        self.params_ = None
        self.history_ = None
        self.classes_ = None

    def fit(self, X, y, X_val=None, y_val=None):
        X = as_float_matrix(X)
        y = np.asarray(y, dtype=np.int64)
        self.classes_ = np.arange(int(y.max()) + 1 if y.size else 1)
        n_classes = max(len(self.classes_), 2)
        if X_val is not None:
            X_all = np.vstack([X, as_float_matrix(X_val)])
            y_all = np.concatenate([y, np.asarray(y_val, dtype=np.int64)])
            train_idx = np.arange(len(X))
            val_idx = np.arange(len(X), len(X_all))
        else:
            X_all, y_all = X, y
            train_idx, val_idx = np.arange(len(X)), None
        config = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                             seed=self.random_state, shuffle=self.shuffle)
        self.params_, self.history_ = train(
            X_all, y_all, train_idx, val_idx, config=config,
            hidden=tuple(self.hidden_sizes), n_classes=n_classes,
            lr=self.lr, beta1=self.beta1, beta2=self.beta2,
            epsilon=self.epsilon,
        )
        return self

    def predict(self, X):
        check_fitted(self, "params_")
        return predict(self.params_, as_float_matrix(X))

    def predict_proba(self, X):
        check_fitted(self, "params_")
        return predict_proba(self.params_, as_float_matrix(X))
