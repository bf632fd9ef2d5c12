"""Fully connected ReLU regressor trained with Adam on mean squared error.

Parameters live in one flat float64 buffer; per-layer weight matrices and bias
vectors are views into it, which keeps the optimiser step a handful of vector
operations.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.compose import TransformedTargetRegressor
from sklearn.pipeline import Pipeline
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import _rng
from .dataset import DEFAULT_MIN_SCALE, Standardizer, TargetMode, TargetScaler
from .errors import TrainingError
from .stats import error_stats

DEFAULT_WIDTHS = (60, 128, 64, 32, 6)
CHECKPOINT_FORMAT = "capsule-proprio-mlp"
CHECKPOINT_VERSION = 1


def _layout(widths):
    shapes, offsets, pos = [], [], 0
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        shapes.append(((fan_out, fan_in), (fan_out,)))
        offsets.append((pos, pos + fan_out * fan_in, pos + fan_out * fan_in + fan_out))
        pos += fan_out * fan_in + fan_out
    return shapes, offsets, pos


class MlpModel:
    """Weights ``W[k]`` have shape (fan_out, fan_in); hidden layers use ReLU."""

    def __init__(self, widths, params=None):
        self.widths = tuple(int(w) for w in widths)
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise ValueError(f"invalid layer widths {widths}")
        shapes, offsets, size = _layout(self.widths)
        self.params = np.zeros(size) if params is None else np.array(params, dtype=np.float64)
        if self.params.shape != (size,):
            raise ValueError(f"expected {size} parameters, got {self.params.shape}")
        self.weights = [self.params[a:b].reshape(ws) for (ws, _), (a, b, _) in zip(shapes, offsets)]
        self.biases = [self.params[b:c] for (_, bs), (_, b, c) in zip(shapes, offsets)]

    @property
    def n_inputs(self):
        return self.widths[0]

    @property
    def n_outputs(self):
        return self.widths[-1]

    def copy(self):
        return MlpModel(self.widths, self.params.copy())

    def grad_buffer(self):
        """Zeroed flat gradient buffer plus per-layer (dW, db) views into it."""
        buf = np.zeros_like(self.params)
        shapes, offsets, _ = _layout(self.widths)
        views = [(buf[a:b].reshape(ws), buf[b:c]) for (ws, _), (a, b, c) in zip(shapes, offsets)]
        return buf, views

    def __call__(self, X):
        return forward(self, X)


def init_model(seed=0, widths=DEFAULT_WIDTHS):
    """Glorot-uniform weights, zero biases."""
    model = MlpModel(widths)
    rng = np.random.default_rng(seed)
    for W in model.weights:
        fan_out, fan_in = W.shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W[...] = rng.uniform(-limit, limit, size=W.shape)
    return model


def _forward_cache(model, X):
    acts = [X]
    h = X
    last = len(model.weights) - 1
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ W.T + b
        h = z if k == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def forward(model, X):
    """Network output for one input vector or a (n, n_inputs) batch."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    if X2.ndim != 2 or X2.shape[1] != model.n_inputs:
        raise ValueError(f"expected inputs with {model.n_inputs} features, got shape {X.shape}")
    out = _forward_cache(model, X2)[-1]
    return out[0] if single else out


def mse(pred, Y):
    return float(np.mean((pred - Y) ** 2))


def backward(model, X, Y, out=None):
    """Loss and exact gradient of the mean (over rows and outputs) squared error.

    Returns ``(loss, flat_gradient)``; the flat gradient is laid out like
    ``model.params``.  ReLU's derivative at 0 is taken as 0.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("empty batch")
    acts = _forward_cache(model, X)
    pred = acts[-1]
    resid = pred - Y
    loss = float(np.mean(resid**2))
    if out is None:
        buf, views = model.grad_buffer()
    else:
        buf, views = out
    delta = 2.0 * resid / resid.size
    for k in range(len(model.weights) - 1, -1, -1):
        dW, db = views[k]
        np.matmul(delta.T, acts[k], out=dW)
        db[...] = delta.sum(axis=0)
        if k:
            delta = (delta @ model.weights[k]) * (acts[k] > 0)
    return loss, buf


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning rate must be >= 0, batch size and epochs >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("invalid Adam hyperparameters")


@dataclass
class TrainReport:
    epoch_losses: list
    test_loss: float | None = None
    error_stats: dict = field(default_factory=dict)
    config: TrainConfig = field(default_factory=TrainConfig)
    model: MlpModel | None = None


def train(model, X, Y, config=TrainConfig(), X_test=None, Y_test=None):
    """Minibatch Adam on MSE; returns a report holding the trained copy of ``model``.

    Each epoch visits the rows in a fresh permutation seeded by (config.seed,
    epoch); the last partial batch is kept.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if X.shape[0] != Y.shape[0] or X.shape[0] == 0:
        raise ValueError("X and Y must be nonempty with matching rows")
    model = model.copy()
    p = model.params
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    grad = model.grad_buffer()
    b1, b2, lr, eps = config.beta1, config.beta2, config.learning_rate, config.eps
    n = len(X)
    step = 0
    losses = []
    for epoch in range(config.epochs):
        order = np.random.default_rng(_rng.derive_seed(config.seed, epoch)).permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, g = backward(model, X[idx], Y[idx], out=grad)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch + 1}; check learning rate and target scaling"
                )
            total += loss * len(idx)
            step += 1
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            denom = np.sqrt(v / (1 - b2**step))
            denom += eps
            p -= (lr / (1 - b1**step)) * m / denom
        losses.append(total / n)
    report = TrainReport(epoch_losses=losses, config=config, model=model)
    if X_test is not None and len(X_test):
        report.test_loss = mse(forward(model, X_test), Y_test)
    return report


AXES = ("x", "y", "z", "roll", "pitch", "yaw")


@dataclass
class Evaluation:
    predictions: np.ndarray  # metres / degrees
    actual: np.ndarray
    stats: dict  # axis -> ErrorStats


def evaluate(model, X_test, Y_test, target_scaler=None):
    """Predict, convert back to metres/degrees and summarise per-axis errors."""
    pred = forward(model, X_test)
    actual = np.asarray(Y_test, dtype=float)
    if target_scaler is not None:
        pred = target_scaler.inverse_transform(pred)
        actual = target_scaler.inverse_transform(actual)
    stats = {ax: error_stats(pred[:, i], actual[:, i]) for i, ax in enumerate(AXES[: pred.shape[1]])}
    return Evaluation(pred, actual, stats)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, model, standardizer=None, target_scaler=None, seeds=None, config=None):
    """Versioned JSON checkpoint; floats are written with exact round-trip repr."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "widths": list(model.widths),
        "params": model.params.tolist(),
        "standardizer": None
        if standardizer is None
        else {"mean": standardizer.mean_.tolist(), "scale": standardizer.scale_.tolist()},
        "target_scaler": None
        if target_scaler is None
        else {
            "mode": TargetMode(target_scaler.mode).value,
            "offset": target_scaler.offset_.tolist(),
            "scale": target_scaler.scale_.tolist(),
        },
        "seeds": dict(seeds or {}),
        "train_config": asdict(config) if config is not None else None,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    """Returns ``(model, standardizer, target_scaler, metadata)``; absent scalers are None."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path} is not a version-{CHECKPOINT_VERSION} checkpoint")
    model = MlpModel(doc["widths"], doc["params"])
    std = None
    if doc["standardizer"] is not None:
        std = Standardizer()
        std.mean_ = np.array(doc["standardizer"]["mean"])
        std.scale_ = np.array(doc["standardizer"]["scale"])
        std.n_features_in_ = len(std.mean_)
    ts = None
    if doc["target_scaler"] is not None:
        ts = TargetScaler(doc["target_scaler"]["mode"])
        ts.offset_ = np.array(doc["target_scaler"]["offset"])
        ts.scale_ = np.array(doc["target_scaler"]["scale"])
    meta = {k: doc[k] for k in ("seeds", "train_config")}
    return model, std, ts, meta


# ---------------------------------------------------------------------------
# estimator interface


class PoseRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`init_model` and :func:`train`.

    Input width and output width are taken from the data passed to ``fit``;
    ``hidden_layer_sizes`` defaults to 128-64-32.
    """

    def __init__(
        self,
        hidden_layer_sizes=(128, 64, 32),
        learning_rate=0.001,
        batch_size=32,
        epochs=100,
        beta1=0.9,
        beta2=0.999,
        eps=1e-8,
        random_state=0,
        shuffle_seed=0,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.random_state = random_state
        self.shuffle_seed = shuffle_seed

    def _train_config(self):
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            seed=self.shuffle_seed,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True, dtype=np.float64)
        self._single_output = y.ndim == 1
        Y = y.reshape(len(y), -1)
        widths = (X.shape[1], *self.hidden_layer_sizes, Y.shape[1])
        report = train(init_model(self.random_state, widths), X, Y, self._train_config())
        self.model_ = report.model
        self.loss_curve_ = report.epoch_losses
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        out = forward(self.model_, X)
        return out[:, 0] if self._single_output else out


def make_pose_estimator(target_mode="standardized", min_scale=DEFAULT_MIN_SCALE, **regressor_params):
    """Counts in, metres/degrees out: standardiser + network + target unit conversion."""
    return TransformedTargetRegressor(
        regressor=Pipeline([("standardize", Standardizer(min_scale)), ("net", PoseRegressor(**regressor_params))]),
        transformer=TargetScaler(target_mode),
        check_inverse=False,
    )
