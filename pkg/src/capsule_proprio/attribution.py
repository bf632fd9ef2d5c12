"""Which receptors matter: permutation importance, ablation, Shapley values.

All routines take a ``predict`` callable mapping an (n, d) input array to an
(n, k) output array; a trained :class:`~capsule_proprio.neuralnet.MlpModel`
works directly.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import _rng
from .capsule_sim import ROW_OF_LABEL, ROWS, SENSOR_LABELS
from .dataset import DEFAULT_MIN_SCALE, Criterion, filter_near_limit, split, standardize
from .errors import ConfigError
from .neuralnet import DEFAULT_WIDTHS, TrainConfig, evaluate, forward, init_model, mse, train


def _as_predict(model):
    if callable(model) and not hasattr(model, "params"):
        return lambda X: np.asarray(model(X), dtype=float).reshape(len(X), -1)
    return lambda X: forward(model, X)


def _rank(scores):
    """Indices by descending score; ties keep the original (label) order."""
    scores = np.asarray(scores, dtype=float)
    return np.lexsort((np.arange(len(scores)), -scores))


# ---------------------------------------------------------------------------
# permutation importance


@dataclass
class ImportanceReport:
    labels: tuple
    scores: np.ndarray  # mean MSE increase per feature in ``labels``
    n_shuffles: int
    baseline_mse: float

    @property
    def ranking(self):
        return tuple(self.labels[i] for i in _rank(self.scores))

    def score_of(self, label):
        return float(self.scores[self.labels.index(label)])


def permutation_importance(model, X, Y, features=None, labels=None, n_shuffles=10, seed=0):
    """Mean increase in test MSE when each feature's column is shuffled.

    ``features`` restricts the evaluation to a subset of column indices (the
    rest are left alone).  Shuffles for feature ``f`` draw from a stream keyed
    by ``(seed, f)``, so scores do not depend on which other features are
    evaluated.
    """
    predict = _as_predict(model)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(len(X), -1)
    if len(X) < 2:
        raise ValueError("permutation importance needs at least two rows")
    features = list(range(X.shape[1])) if features is None else [int(f) for f in features]
    labels = tuple(labels) if labels is not None else tuple(f"f{i}" for i in range(X.shape[1]))
    baseline = mse(predict(X), Y)
    scores = np.empty(len(features))
    Xp = X.copy()
    for k, f in enumerate(features):
        rng = np.random.default_rng(_rng.derive_seed(seed, f))
        shuffled = []
        for _ in range(n_shuffles):
            Xp[:, f] = X[rng.permutation(len(X)), f]
            shuffled.append(mse(predict(Xp), Y))
        Xp[:, f] = X[:, f]
        scores[k] = np.mean(shuffled) - baseline
    return ImportanceReport(tuple(labels[f] for f in features), scores, n_shuffles, baseline)


# ---------------------------------------------------------------------------
# ablation


ABLATION_AXES = ("pitch", "roll")


@dataclass(frozen=True)
class AblationPoint:
    ratio: float
    n_removed: int
    mean_err: dict  # axis -> mean absolute error (degrees)
    max_err: dict  # axis -> max absolute error (degrees)
    final_loss: float
    removed_next: str | None = None


@dataclass
class AblationCurve:
    seed: int
    points: list = field(default_factory=list)
    loss_curves: list = field(default_factory=list)

    @property
    def ratios(self):
        return [p.ratio for p in self.points]

    @property
    def removal_order(self):
        return [p.removed_next for p in self.points if p.removed_next is not None]


def _ablation_trial(tensors, seed, train_config, n_shuffles, widths, labels, keep_loss_curves):
    X_train = tensors.X_train.copy()
    X_test = tensors.X_test.copy()
    n_features = X_train.shape[1]
    remaining = list(range(n_features))
    curve = AblationCurve(seed=seed)
    step = 0
    while True:
        cfg = TrainConfig(**{**train_config.__dict__, "seed": _rng.derive_seed(seed, step, 2)})
        model = init_model(_rng.derive_seed(seed, step, 1), widths)
        report = train(model, X_train, tensors.Y_train, cfg)
        ev = evaluate(report.model, X_test, tensors.Y_test, tensors.target_scaler)
        removed = None
        if len(remaining) >= 2:
            imp = permutation_importance(
                report.model,
                X_test,
                tensors.Y_test,
                features=remaining,
                labels=labels,
                n_shuffles=n_shuffles,
                seed=_rng.derive_seed(seed, step, 3),
            )
            top = remaining[_rank(imp.scores)[0]]
            removed = labels[top]
        curve.points.append(
            AblationPoint(
                ratio=step / n_features,
                n_removed=step,
                mean_err={ax: ev.stats[ax].mean_abs for ax in ABLATION_AXES},
                max_err={ax: ev.stats[ax].max for ax in ABLATION_AXES},
                final_loss=report.epoch_losses[-1],
                removed_next=removed,
            )
        )
        if keep_loss_curves:
            curve.loss_curves.append(report.epoch_losses)
        if removed is None:
            return curve
        # "Removing" a receptor pins its standardised column to the training mean (0).
        X_train[:, top] = 0.0
        X_test[:, top] = 0.0
        remaining.remove(top)
        step += 1


def ablate(
    tensors,
    train_config=TrainConfig(),
    n_trials=10,
    seeds=None,
    n_shuffles=10,
    widths=None,
    labels=SENSOR_LABELS,
    n_jobs=1,
    keep_loss_curves=False,
):
    """Iteratively drop the most important receptor and retrain, once per trial seed.

    Each trial yields one point per reduction ratio ``k / n_features`` for
    k = 0 .. n_features - 1.
    """
    seeds = list(range(n_trials)) if seeds is None else [int(s) for s in seeds]
    if len(seeds) != n_trials:
        raise ConfigError(f"{n_trials} trials need {n_trials} seeds, got {len(seeds)}")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("trial seeds must be distinct")
    n_features = tensors.X_train.shape[1]
    widths = widths or (n_features, *DEFAULT_WIDTHS[1:-1], tensors.Y_train.shape[1])
    labels = tuple(labels)[:n_features] if len(labels) >= n_features else tuple(f"f{i}" for i in range(n_features))
    args = (train_config, n_shuffles, widths, labels, keep_loss_curves)
    if n_jobs == 1:
        return [_ablation_trial(tensors, s, *args) for s in seeds]
    return list(Parallel(n_jobs=n_jobs)(delayed(_ablation_trial)(tensors, s, *args) for s in seeds))


# ---------------------------------------------------------------------------
# Shapley values


@dataclass
class ShapleyResult:
    values: np.ndarray  # (rows, features, outputs)
    base_value: np.ndarray  # mean background output, (outputs,)
    sampled_base: np.ndarray  # per row mean output over the sampled background rows, (rows, outputs)
    standard_error: np.ndarray  # standard error of sampled_base, (outputs,)
    predictions: np.ndarray  # f(x), (rows, outputs)

    def efficiency_residual(self):
        """sum_i phi_i - (f(x) - E_z f(z)) per row and output."""
        return self.values.sum(axis=1) - (self.predictions - self.base_value)


def shapley_values(model, X_eval, background, n_permutations=200, seed=0, max_batch=400_000):
    """Monte-Carlo permutation estimate of interventional Shapley values.

    For every evaluation row, each sampled feature ordering is paired with one
    background row drawn uniformly; walking the ordering switches features
    from the background row's values to the evaluated row's values and credits
    each switch's output change to that feature.
    """
    predict = _as_predict(model)
    X_eval = np.atleast_2d(np.asarray(X_eval, dtype=float))
    background = np.atleast_2d(np.asarray(background, dtype=float))
    if len(background) == 0:
        raise ValueError("background set is empty")
    n_rows, d = X_eval.shape
    P = int(n_permutations)
    if P < 1:
        raise ValueError("need at least one permutation")
    rng = np.random.default_rng(seed)
    bg_out = np.atleast_2d(predict(background))
    bg_out = bg_out.reshape(len(background), -1)
    n_out = bg_out.shape[1]
    values = np.zeros((n_rows, d, n_out))
    sampled_base = np.zeros((n_rows, n_out))
    steps = np.arange(d + 1)
    chunk = max(1, max_batch // ((d + 1) * d))
    for r in range(n_rows):
        x = X_eval[r]
        pos = np.argsort(rng.random((P, d)), axis=1).argsort(axis=1)  # position of feature f in ordering k
        z_idx = rng.integers(0, len(background), P)
        acc = np.zeros((d, n_out))
        for lo in range(0, P, chunk):
            hi = min(P, lo + chunk)
            p = pos[lo:hi]
            z = background[z_idx[lo:hi]]
            mask = p[:, None, :] < steps[None, :, None]  # (k, d+1, d): feature already switched to x
            inputs = np.where(mask, x[None, None, :], z[:, None, :]).reshape(-1, d)
            out = np.asarray(predict(inputs)).reshape(hi - lo, d + 1, n_out)
            before = np.take_along_axis(out, p[:, :, None], axis=1)
            after = np.take_along_axis(out, p[:, :, None] + 1, axis=1)
            acc += (after - before).sum(axis=0)
        values[r] = acc / P
        sampled_base[r] = bg_out[z_idx].mean(axis=0)
    se = bg_out.std(axis=0) / np.sqrt(P)
    return ShapleyResult(values, bg_out.mean(axis=0), sampled_base, se, np.asarray(predict(X_eval)).reshape(n_rows, -1))


# ---------------------------------------------------------------------------
# near-limit attribution


@dataclass
class ShapReport:
    labels: tuple
    aggregate: np.ndarray  # mean over rows of sum over outputs of |phi|
    seed: int
    n_train: int
    n_eval: int

    @property
    def top3(self):
        return tuple(self.labels[i] for i in _rank(self.aggregate)[:3])


@dataclass
class RegionCount:
    counts: dict  # Row -> appearances in top-3 lists
    frequency: dict  # label -> number of trials with label in top-3
    n_trials: int

    @property
    def total(self):
        return sum(self.counts.values())

    @property
    def most_frequent(self):
        """Labels with the highest top-3 frequency (ties in label order)."""
        if not self.frequency:
            return ()
        best = max(self.frequency.values())
        return tuple(l for l in SENSOR_LABELS if self.frequency.get(l) == best) or tuple(
            sorted(l for l, f in self.frequency.items() if f == best)
        )

    def in_all_trials(self):
        return tuple(l for l, f in self.frequency.items() if f == self.n_trials)


def region_count(reports, row_of=ROW_OF_LABEL):
    freq = Counter()
    counts = {row: 0 for row in ROWS}
    for rep in reports:
        for label in rep.top3:
            freq[label] += 1
            counts[row_of[label]] += 1
    return RegionCount(counts=counts, frequency=dict(freq), n_trials=len(reports))


@dataclass
class NearLimitResult:
    criterion: Criterion
    subset_size: int
    reports: list
    region_count: RegionCount


def near_limit_attribution(
    data,
    criterion,
    n_trials=5,
    seeds=None,
    train_config=TrainConfig(),
    test_fraction=0.20,
    split_seed=0,
    target_mode="standardized",
    min_scale=DEFAULT_MIN_SCALE,
    n_permutations=200,
    n_background=100,
):
    """Train ``n_trials`` fresh models on the near-limit subset and rank receptors by Shapley value."""
    criterion = Criterion(criterion)
    seeds = list(range(n_trials)) if seeds is None else [int(s) for s in seeds]
    if len(seeds) != n_trials or len(set(seeds)) != n_trials:
        raise ConfigError(f"need {n_trials} distinct trial seeds")
    subset = filter_near_limit(data, criterion)
    if len(subset) < 5:
        raise ConfigError(
            f"only {len(subset)} records pass the {criterion.value} threshold; relax the threshold or record more near-limit motion"
        )
    sp = split(subset, test_fraction, split_seed)
    tensors = standardize(subset, sp, target_mode, min_scale)
    widths = (tensors.X_train.shape[1], *DEFAULT_WIDTHS[1:-1], tensors.Y_train.shape[1])
    reports = []
    for s in seeds:
        cfg = TrainConfig(**{**train_config.__dict__, "seed": _rng.derive_seed(s, 2)})
        model = train(init_model(_rng.derive_seed(s, 1), widths), tensors.X_train, tensors.Y_train, cfg).model
        bg_rng = np.random.default_rng(_rng.derive_seed(s, 4))
        n_bg = min(n_background, len(tensors.X_train))
        background = tensors.X_train[np.sort(bg_rng.choice(len(tensors.X_train), n_bg, replace=False))]
        res = shapley_values(model, tensors.X_test, background, n_permutations, seed=_rng.derive_seed(s, 5))
        agg = np.abs(res.values).mean(axis=0).sum(axis=1)
        reports.append(ShapReport(SENSOR_LABELS[: len(agg)], agg, s, len(sp.train), len(sp.test)))
    return NearLimitResult(criterion, len(subset), reports, region_count(reports))
