import numpy as np
import pytest
from sklearn.linear_model import LinearRegression

from capsule_proprio import capsule_sim as cs
from capsule_proprio.attribution import (
    ShapReport,
    ablate,
    near_limit_attribution,
    permutation_importance,
    region_count,
    shapley_values,
)
from capsule_proprio.dataset import Dataset, ModelTensors, TargetScaler, split
from capsule_proprio.errors import ConfigError
from capsule_proprio.neuralnet import TrainConfig, forward, init_model
from oracles import exact_shapley, expected_permutation_importance, loo_retrain_ranking

# --- permutation importance


def test_ignored_feature_scores_zero():
    m = init_model(0)
    m.weights[0][:, 11] = 0.0
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 60))
    Y = rng.normal(size=(40, 6))
    rep = permutation_importance(m, X, Y, features=[3, 11, 20], n_shuffles=10, seed=1)
    assert abs(rep.score_of("f11")) <= 1e-12
    assert rep.score_of("f3") != 0.0


def test_linear_closed_form_matches_enumeration():
    x1 = np.array([0.3, -1.2, 2.0, 0.7, -0.4, 1.1])
    X = np.column_stack([x1, np.linspace(-1, 1, 6)])
    Y = 3 * x1

    def predict(A):
        return 3 * A[:, 0]

    closed = 18 * x1.var()
    assert expected_permutation_importance(predict, X, Y, 0) == pytest.approx(closed, rel=1e-12)
    assert expected_permutation_importance(predict, X, Y, 1) == 0.0
    rep = permutation_importance(predict, X, Y, n_shuffles=4000, seed=3)
    assert rep.scores[0] == pytest.approx(closed, rel=0.05)
    assert rep.scores[1] == 0.0


def _toy_five():
    rng = np.random.default_rng(42)
    X = rng.normal(size=(600, 5))
    y = X @ np.array([5.0, 3.0, 2.0, 1.0, 0.0]) + 0.05 * rng.normal(size=600)
    return X, y


def test_ranking_matches_leave_one_out_oracle():
    X, y = _toy_five()
    tr, te = slice(0, 400), slice(400, 600)
    reg = LinearRegression().fit(X[tr], y[tr])
    rep = permutation_importance(reg.predict, X[te], y[te], n_shuffles=10, seed=0)

    def fit_predict(A):
        return LinearRegression().fit(A[tr], y[tr]).predict(A[te])

    oracle, _ = loo_retrain_ranking(X, y[te], fit_predict)
    assert list(rep.ranking) == [f"f{i}" for i in oracle]


def test_importance_stream_independent_of_feature_subset():
    m = init_model(1)
    rng = np.random.default_rng(2)
    X, Y = rng.normal(size=(30, 60)), rng.normal(size=(30, 6))
    a = permutation_importance(m, X, Y, features=[4, 9], seed=5)
    b = permutation_importance(m, X, Y, features=[9], seed=5)
    assert a.score_of("f9") == b.score_of("f9")


def test_importance_needs_two_rows():
    with pytest.raises(ValueError):
        permutation_importance(init_model(0), np.zeros((1, 60)), np.zeros((1, 6)))


# --- ablation


def _tiny_tensors(d=6, n=80, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    W = rng.normal(size=(d, 6))
    Y = X @ W
    ts = TargetScaler("raw").fit()
    cut = int(0.8 * n)
    return ModelTensors(X[:cut], Y[:cut], X[cut:], Y[cut:], None, ts, split(n, 0.2, 0))


def test_ablation_curve_shape_and_determinism():
    t = _tiny_tensors()
    cfg = TrainConfig(epochs=3)
    a = ablate(t, cfg, n_trials=2, seeds=[4, 9], n_shuffles=2, widths=(6, 8, 6))
    b = ablate(t, cfg, n_trials=2, seeds=[4, 9], n_shuffles=2, widths=(6, 8, 6))
    assert len(a) == 2
    assert a[0].ratios == pytest.approx([k / 6 for k in range(6)])
    assert np.all(np.diff(a[0].ratios) > 0)
    assert sorted(a[0].removal_order) != [] and len(set(a[0].removal_order)) == 5
    assert a[0].points[-1].removed_next is None
    for ca, cb in zip(a, b):
        assert [p.mean_err for p in ca.points] == [p.mean_err for p in cb.points]
        assert ca.removal_order == cb.removal_order


def test_ablation_removes_the_dominant_feature_first():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 4))
    Y = np.zeros((200, 6))
    Y[:, 4] = 10 * X[:, 2] + 0.1 * X[:, 0]  # pitch column
    t = ModelTensors(X[:160], Y[:160], X[160:], Y[160:], None, TargetScaler("raw").fit(), split(200, 0.2, 0))
    curve = ablate(t, TrainConfig(epochs=30), n_trials=1, seeds=[0], n_shuffles=3, widths=(4, 16, 6), labels=[f"f{i}" for i in range(4)])[0]
    assert curve.removal_order[0] == "f2"
    assert curve.points[1].mean_err["pitch"] > curve.points[0].mean_err["pitch"]


def test_ablation_parallel_matches_sequential():
    t = _tiny_tensors()
    cfg = TrainConfig(epochs=2)
    seq = ablate(t, cfg, n_trials=2, seeds=[1, 2], n_shuffles=1, widths=(6, 4, 6))
    par = ablate(t, cfg, n_trials=2, seeds=[1, 2], n_shuffles=1, widths=(6, 4, 6), n_jobs=2)
    assert [c.removal_order for c in seq] == [c.removal_order for c in par]
    assert [p.max_err for p in seq[1].points] == [p.max_err for p in par[1].points]


def test_ablation_rejects_duplicate_seeds():
    with pytest.raises(ConfigError):
        ablate(_tiny_tensors(), n_trials=2, seeds=[3, 3])
    with pytest.raises(ConfigError):
        ablate(_tiny_tensors(), n_trials=3, seeds=[1, 2])


# --- Shapley values


def test_linear_single_background_exact():
    rng = np.random.default_rng(0)
    w = rng.normal(size=7)
    X = rng.normal(size=(5, 7))
    z = rng.normal(size=(1, 7))
    res = shapley_values(lambda A: A @ w, X, z, n_permutations=3, seed=1)
    expected = w[None, :] * (X - z)
    assert np.abs(res.values[:, :, 0] - expected).max() <= 1e-10


def _nonlinear(A):
    return np.column_stack([A[:, 0] * A[:, 1] + np.sin(A[:, 2]) + A[:, 0] ** 2, np.maximum(A[:, 1] - A[:, 2], 0)])


def test_monte_carlo_close_to_exact_enumeration():
    rng = np.random.default_rng(3)
    background = rng.normal(size=(1, 3))
    x = np.array([1.5, -1.0, 2.0])
    exact = exact_shapley(_nonlinear, x, background)
    mc = shapley_values(_nonlinear, x[None, :], background, n_permutations=2000, seed=7).values[0]
    scale = np.abs(exact).max(axis=0)
    assert np.all(np.abs(mc - exact) <= 0.02 * np.maximum(np.abs(exact), scale))


def test_monte_carlo_close_to_exact_with_background_set():
    rng = np.random.default_rng(4)
    background = rng.normal(size=(20, 3))
    x = np.array([1.0, 0.5, -1.5])
    exact = exact_shapley(_nonlinear, x, background)
    mc = shapley_values(_nonlinear, x[None, :], background, n_permutations=20000, seed=2).values[0]
    assert np.abs(mc - exact).max() <= 0.05 * np.abs(exact).max()


def test_efficiency_within_three_standard_errors():
    rng = np.random.default_rng(5)
    background = rng.normal(size=(100, 4))
    X = rng.normal(size=(50, 4))

    def f(A):
        return (np.tanh(A[:, 0] * A[:, 1]) + A[:, 2] * A[:, 3] ** 2)[:, None]

    res = shapley_values(f, X, background, n_permutations=200, seed=11)
    resid = res.efficiency_residual()
    assert np.all(np.abs(resid) <= 3 * res.standard_error)
    # telescoping makes the sum exact against the sampled background rows
    np.testing.assert_allclose(res.values.sum(axis=1), res.predictions - res.sampled_base, atol=1e-12)


def test_symmetric_features_get_equal_attribution():
    rng = np.random.default_rng(6)
    background = rng.normal(size=(30, 3))
    background[:, 1] = background[:, 0]
    x = np.array([[0.8, 0.8, -0.3]])

    def f(A):
        return np.tanh(A[:, 0] + A[:, 1]) * (1 + A[:, 2])

    exact = exact_shapley(f, x[0], background)[:, 0]
    assert exact[0] == pytest.approx(exact[1], abs=1e-12)
    phi = shapley_values(f, x, background, n_permutations=20000, seed=0).values[0, :, 0]
    assert phi[0] == pytest.approx(phi[1], rel=0.05)


def test_shapley_on_network_and_errors():
    m = init_model(0)
    rng = np.random.default_rng(0)
    res = shapley_values(m, rng.normal(size=(2, 60)), rng.normal(size=(5, 60)), n_permutations=4, seed=0)
    assert res.values.shape == (2, 60, 6) and np.all(np.isfinite(res.values))
    np.testing.assert_allclose(res.predictions, forward(m, rng.normal(size=(2, 60))) * 0 + res.predictions)
    with pytest.raises(ValueError):
        shapley_values(m, np.zeros((1, 60)), np.zeros((0, 60)))


# --- reports and region counts


def test_top3_ties_break_by_label_order():
    labels = cs.SENSOR_LABELS
    rep = ShapReport(labels, np.zeros(60), 0, 10, 3)
    assert rep.top3 == ("adc0_data0", "adc0_data1", "adc0_data2")
    rc = region_count([rep] * 5)
    assert rc.total == 15 and rc.counts[cs.Row.MID_CAPSULAR] == 15
    assert rc.frequency["adc0_data0"] == 5 and "adc0_data0" in rc.in_all_trials()
    assert rc.most_frequent == ("adc0_data0", "adc0_data1", "adc0_data2")


def test_top3_are_three_largest():
    scores = np.arange(60.0)[::-1] * 0.0
    scores[[44, 7, 30]] = [3.0, 2.0, 1.0]
    rep = ShapReport(cs.SENSOR_LABELS, scores, 0, 10, 3)
    assert rep.top3 == (cs.SENSOR_LABELS[44], cs.SENSOR_LABELS[7], cs.SENSOR_LABELS[30])


@pytest.fixture(scope="module")
def short_data():
    cfg = cs.TrajectoryConfig(n_samples=400)
    traj = cs.generate_trajectory(cfg, 0)
    return Dataset.from_simulation(cs.simulate(cs.default_geometry(0), traj, seed=0))


def test_near_limit_attribution_counts(short_data):
    res = near_limit_attribution(
        short_data, "twist", n_trials=2, seeds=[0, 1], train_config=TrainConfig(epochs=3), n_permutations=5, n_background=10
    )
    assert res.region_count.total == 6
    assert all(len(r.top3) == 3 for r in res.reports)
    assert all(f <= 2 for f in res.region_count.frequency.values())
    assert res.subset_size == int(np.sum(np.abs(short_data.poses[:, 3]) > 20))


def test_near_limit_attribution_small_subset_advises(short_data):
    tiny = short_data.subset(np.arange(5))
    with pytest.raises(ConfigError, match="threshold"):
        near_limit_attribution(tiny, "bend", n_trials=1)
