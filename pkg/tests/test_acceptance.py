"""One test per acceptance criterion; each records a PASS/FAIL line shown in the terminal summary.

Criteria 2, 3 and 6 share one default ``repro`` run (about a quarter of an hour single-threaded).
"""

import csv
import json
import time

import numpy as np
import pytest

from capsule_proprio import capsule_sim as cs
from capsule_proprio.attribution import permutation_importance, shapley_values
from capsule_proprio.cli import EXIT_OK, main
from capsule_proprio.dataset import read_csv, write_csv
from capsule_proprio.neuralnet import backward, forward, init_model, mse
from capsule_proprio.stats import holm_correct, t_cdf, welch_t_test
from conftest import record
from oracles import exact_shapley, loo_retrain_ranking, t_cdf_quadrature
from sklearn.linear_model import LinearRegression


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="session")
def repro(tmp_path_factory):
    out = tmp_path_factory.mktemp("repro")
    code = main(["repro", "--out", str(out)])
    assert code == EXIT_OK
    return out, json.loads((out / "manifest.json").read_text())["timings_s"]


def test_criterion_1_gradient():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    model = init_model(0)
    model.params[:] += rng.normal(0, 0.01, model.params.size)
    h, worst = 1e-5, 0.0
    for _ in range(10):
        X, Y = rng.normal(size=(8, 60)), rng.normal(size=(8, 6))
        _, grad = backward(model, X, Y)
        for i in rng.choice(model.params.size, 100, replace=False):
            old = model.params[i]
            model.params[i] = old + h
            up = mse(forward(model, X), Y)
            model.params[i] = old - h
            down = mse(forward(model, X), Y)
            model.params[i] = old
            fd = (up - down) / (2 * h)
            worst = max(worst, abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-8))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 10
    assert record(1, "gradient vs finite differences", ok, f"max rel err {worst:.2e}, {elapsed:.1f} s")


def test_criterion_2_estimation(repro):
    out, timings = repro
    rows = {r["Error Type"]: r for r in _rows(out / "train" / "error_stats.csv")}
    mean = rows["Mean Error"]
    att = [float(mean[f"{a} (deg)"]) for a in ("roll", "pitch", "yaw")]
    pos = [float(mean[f"{a} (m)"]) for a in ("x", "y", "z")]
    ok = max(att) <= 2.0 and max(pos) <= 0.005 and timings["train"] < 300
    detail = f"attitude {', '.join(f'{v:.3f}' for v in att)} deg; position {', '.join(f'{v * 1000:.2f}' for v in pos)} mm"
    assert record(2, "estimation errors within 2 deg / 5 mm", ok, f"{detail}; train {timings['train']:.0f} s")


def test_criterion_3_redundancy(repro):
    out, timings = repro
    curves = {}
    for r in _rows(out / "ablate" / "ablation.csv"):
        curves.setdefault((int(r["trial"]), r["axis"]), []).append((float(r["ratio"]), float(r["mean_err"])))
    trials = sorted({k[0] for k in curves})
    above = 0
    for k in trials:
        pts = curves[k, "pitch"]
        base = pts[0][1]
        above += min(e for ratio, e in pts if ratio >= 0.9) > base
    part_a = above >= 9 and len(trials) == 10

    summary = {(r["metric"], r["axis"]): r["first_significant_ratio"] for r in _rows(out / "ablate" / "ablation_summary.csv")}
    part_b = True
    for ax in ("pitch", "roll"):
        m, x = summary["mean", ax], summary["max", ax]
        part_b &= m != "" and (x == "" or float(m) <= float(x))

    part_c = True
    for ax in ("pitch", "roll"):
        ratios = [p[0] for p in curves[trials[0], ax]]
        mean_curve = np.mean([[p[1] for p in curves[k, ax]] for k in trials], axis=0)
        part_c &= ratios[1] > 0 and mean_curve[1] <= 2 * mean_curve[0]
    ok = part_a and part_b and part_c and timings["ablate"] < 90 * 60
    detail = f"(a) {above}/{len(trials)} above baseline; (b) {summary}; (c) {part_c}; ablate {timings['ablate']:.0f} s"
    assert record(3, "ablation redundancy analogue", ok, detail)


def test_criterion_4_permutation_importance():
    t0 = time.perf_counter()
    rng = np.random.default_rng(42)
    X = rng.normal(size=(600, 5))
    y = X @ np.array([5.0, 3.0, 2.0, 1.0, 0.0]) + 0.05 * rng.normal(size=600)
    tr, te = slice(0, 400), slice(400, 600)
    reg = LinearRegression().fit(X[tr], y[tr])
    rep = permutation_importance(reg.predict, X[te], y[te], n_shuffles=10, seed=0)
    oracle, _ = loo_retrain_ranking(X, y[te], lambda A: LinearRegression().fit(A[tr], y[tr]).predict(A[te]))
    match = list(rep.ranking) == [f"f{i}" for i in oracle]

    w = np.array([2.0, -1.0, 0.0, 0.5, 1.5])
    ignored = permutation_importance(lambda A: A @ w, X[te], X[te] @ w, seed=1).scores[2]
    elapsed = time.perf_counter() - t0
    ok = match and abs(ignored) <= 1e-12 and elapsed < 120
    assert record(4, "permutation importance vs retraining oracle", ok, f"ranking {rep.ranking}; ignored {ignored:.1e}")


def _nonlinear(A):
    return np.column_stack([A[:, 0] * A[:, 1] + np.sin(A[:, 2]) + A[:, 0] ** 2, np.maximum(A[:, 1] - A[:, 2], 0)])


def test_criterion_5_shapley():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    w = rng.normal(size=7)
    X, z = rng.normal(size=(5, 7)), rng.normal(size=(1, 7))
    lin = shapley_values(lambda A: A @ w, X, z, n_permutations=3, seed=1).values[:, :, 0]
    err_a = np.abs(lin - w * (X - z)).max()

    background = np.random.default_rng(3).normal(size=(1, 3))
    x = np.array([1.5, 2.0, -1.0])
    exact = exact_shapley(_nonlinear, x, background)
    mc = shapley_values(_nonlinear, x[None, :], background, n_permutations=2000, seed=7).values[0]
    # relative to each output's largest attribution; an exactly zero attribution stays zero
    rel_b = (np.abs(mc - exact) / np.abs(exact).max(axis=0)).max()

    rng = np.random.default_rng(5)
    res = shapley_values(
        lambda A: (np.tanh(A[:, 0] * A[:, 1]) + A[:, 2] * A[:, 3] ** 2)[:, None],
        rng.normal(size=(50, 4)),
        rng.normal(size=(100, 4)),
        n_permutations=200,
        seed=11,
    )
    z_c = np.abs(res.efficiency_residual() / res.standard_error).max()
    elapsed = time.perf_counter() - t0
    ok = err_a <= 1e-10 and rel_b <= 0.02 and z_c <= 3 and elapsed < 60
    assert record(5, "Shapley oracles", ok, f"(a) {err_a:.1e}; (b) {rel_b:.2%}; (c) max |resid|/SE {z_c:.2f}")


def test_criterion_6_near_limit(repro):
    out, timings = repro
    shares, totals = {}, {}
    for crit in ("bend", "twist"):
        counts = {r["region"]: int(r["count"]) for r in _rows(out / "attribute" / crit / "region_counts.csv")}
        totals[crit] = sum(counts.values())
        shares[crit] = (totals[crit] - counts[cs.Row.MID_CAPSULAR.value]) / totals[crit]
    ok = all(s >= 0.6 for s in shares.values()) and all(t == 15 for t in totals.values()) and timings["attribute"] < 20 * 60
    detail = ", ".join(f"{c} {shares[c]:.0%} of {totals[c]}" for c in shares)
    assert record(6, "near-limit top-3 in transitional/attachment rows", ok, f"{detail}; attribute {timings['attribute']:.0f} s")


def test_criterion_7_statistics():
    t0 = time.perf_counter()
    t, df, p = welch_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
    welch_ok = abs(t + 1.0) <= 1e-4 and abs(df - 8.0) <= 1e-4 and abs(p - 0.3466) <= 1e-4
    cdf_err = max(
        abs(t_cdf(float(v), d) - t_cdf_quadrature(float(v), d)) for d in (1.0, 2.5, 8.0, 30.0) for v in np.linspace(-10, 10, 41)
    )
    adjusted, _ = holm_correct([0.01, 0.04, 0.03])
    holm_ok = list(adjusted) == [0.03, 0.06, 0.06]
    elapsed = time.perf_counter() - t0
    ok = welch_ok and cdf_err <= 1e-8 and holm_ok and elapsed < 5
    assert record(7, "Welch / t-CDF / Holm", ok, f"t={t:.4f} df={df:.4f} p={p:.4f}; cdf err {cdf_err:.1e}; holm {list(adjusted)}")


REDUCED = [
    "--train.epochs", "2", "--ablate.trials", "2", "--ablate.n_shuffles", "1",
    "--attribute.trials", "2", "--attribute.n_permutations", "2", "--attribute.background", "5",
]  # fmt: skip


def _tree(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file() and p.name != "manifest.json"}


def test_criterion_8_format_and_determinism(tmp_path):
    t0 = time.perf_counter()
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["repro", "--out", str(a), *REDUCED]) == EXIT_OK
    assert main(["repro", "--out", str(b), *REDUCED]) == EXIT_OK
    ta, tb = _tree(a), _tree(b)
    identical = ta == tb and len(ta) > 20

    data = read_csv(a / "simulate" / "dataset.csv")
    write_csv(data, tmp_path / "again.csv")
    round_trip = read_csv(tmp_path / "again.csv") == data and (tmp_path / "again.csv").read_bytes() == ta["simulate/dataset.csv"]

    offsets = [float(r["final_offset"]) for r in _rows(a / "drift" / "drift_offsets.csv")]
    drift_ok = np.allclose(offsets, cs.REFERENCE_DRIFT, rtol=0, atol=1e-12)
    elapsed = time.perf_counter() - t0
    ok = identical and round_trip and drift_ok and elapsed < 600
    detail = f"{len(ta)} files identical={identical}; round trip {round_trip}; drift {offsets}; {elapsed:.0f} s"
    assert record(8, "CSV round trip, repeat determinism, drift offsets", ok, detail)
