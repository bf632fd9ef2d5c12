"""Command-line entry point: ``capsule-proprio {simulate,train,ablate,attribute,repro}``.

Each command writes its outputs into ``--out`` together with a
``manifest.json`` describing inputs, seeds, versions, output hashes and timings.
Exit codes: 0 success, 2 user or configuration error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__, capsule_sim, svg
from .attribution import ABLATION_AXES, ablate, near_limit_attribution
from .config import KEYS, load_config
from .dataset import (
    REFERENCE_SUBSET_SIZES,
    Criterion,
    Dataset,
    read_csv,
    split,
    standardize,
    write_csv,
)
from .errors import CapsuleError, ConfigError
from .neuralnet import AXES, TrainConfig, evaluate, init_model, save_checkpoint, train
from .stats import compare_to_baseline

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 2, 3

# Reference values from the physical joint, for side-by-side reporting.
REFERENCE_ERRORS = {
    "Maximum Error": {"x": 0.0195, "y": 0.0149, "z": 0.0247, "roll": 6.1621, "pitch": 7.8585, "yaw": 9.4371},
    "Mean Error": {"x": 0.0023, "y": 0.0020, "z": 0.0033, "roll": 0.7211, "pitch": 1.3025, "yaw": 1.3744},
    "Standard Deviation": {"x": 0.0028, "y": 0.0022, "z": 0.0037, "roll": 0.8798, "pitch": 1.4239, "yaw": 1.5882},
}
REFERENCE_FIRST_SIGNIFICANT = {
    ("mean", "pitch"): 0.257,
    ("mean", "roll"): 0.286,
    ("max", "pitch"): 0.486,
    ("max", "roll"): 0.514,
}
REFERENCE_REGION_COUNTS = {"twist": (3, 6, 6), "bend": (0, 9, 6), "pushpull": (5, 6, 4)}
ERROR_ROWS = ("Maximum Error", "Mean Error", "Standard Deviation")
AXIS_UNITS = {"x": "m", "y": "m", "z": "m", "roll": "deg", "pitch": "deg", "yaw": "deg"}


class UserError(CapsuleError):
    pass


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


class Outputs:
    """Tracks files written below one output directory."""

    def __init__(self, root):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise UserError(f"cannot create output directory {self.root}: {exc.strerror}") from None
        self.files = []

    def path(self, name):
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(p)
        return p

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])

    def text(self, name, text):
        self.path(name).write_text(text)

    def json(self, name, doc):
        self.text(name, json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _versions():
    import joblib
    import scipy
    import sklearn

    return {
        "capsule_proprio": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
        "joblib": joblib.__version__,
        "python": platform.python_version(),
    }


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out, command, cfg, inputs, timings, status="ok", error=None):
    files = sorted({p for p in out.files if p.exists()})
    doc = {
        "command": command,
        "status": status,
        "config": cfg.as_dict(),
        "seeds": {k.name: cfg[k.name] for k in KEYS if "seed" in k.name},
        "inputs": {k: str(v) for k, v in inputs.items()},
        "versions": _versions(),
        "outputs": {str(p.relative_to(out.root)): _sha256(p) for p in files},
        "timings_s": {k: round(v, 3) for k, v in timings.items()},
    }
    if error is not None:
        doc["error"] = error
    (out.root / "manifest.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# pipeline stages


def run_simulation(cfg, drift=None):
    geometry = capsule_sim.default_geometry(cfg["sim.layout_seed"], jitter=cfg["sim.jitter"])
    trajectory = capsule_sim.generate_trajectory(
        capsule_sim.TrajectoryConfig(n_samples=cfg["sim.samples"], period=cfg["sim.period"], wander=cfg["sim.wander"]),
        cfg["sim.seed"],
    )
    return capsule_sim.simulate(
        geometry,
        trajectory,
        failure_plan=capsule_sim.FailurePlan(n_failed=cfg["sim.failed"]),
        drift_model=capsule_sim.DriftModel(enabled=cfg["sim.drift"] if drift is None else drift),
        seed=cfg["sim.seed"],
        readout=capsule_sim.Readout(gain=cfg["sim.gain"], noise_sigma=cfg["sim.noise_sigma"]),
    )


def _train_config(cfg):
    return TrainConfig(
        learning_rate=cfg["train.learning_rate"],
        batch_size=cfg["train.batch_size"],
        epochs=cfg["train.epochs"],
        seed=cfg["train.seed"],
    )


def _tensors(data, cfg):
    sp = split(data, cfg["split.fraction"], cfg["split.seed"])
    return standardize(data, sp, cfg["targets.mode"], cfg["inputs.min_scale"])


def stage_simulate(out, cfg, prefix=""):
    result = run_simulation(cfg)
    data = Dataset.from_simulation(result)
    write_csv(data, out.path(prefix + "dataset.csv"))
    return data


def stage_train(out, data, cfg, prefix=""):
    tensors = _tensors(data, cfg)
    widths = (tensors.X_train.shape[1], 128, 64, 32, tensors.Y_train.shape[1])
    report = train(init_model(cfg["train.init_seed"], widths), tensors.X_train, tensors.Y_train, _train_config(cfg))
    ev = evaluate(report.model, tensors.X_test, tensors.Y_test, tensors.target_scaler)
    save_checkpoint(
        out.path(prefix + "checkpoint.json"),
        report.model,
        tensors.standardizer,
        tensors.target_scaler,
        seeds={"init": cfg["train.init_seed"], "shuffle": cfg["train.seed"], "split": cfg["split.seed"]},
        config=report.config,
    )
    out.csv(prefix + "loss_curve.csv", ("epoch", "loss"), ((i + 1, l) for i, l in enumerate(report.epoch_losses)))
    attrs = {"Maximum Error": "max", "Mean Error": "mean_abs", "Standard Deviation": "std_abs"}
    out.csv(
        prefix + "error_stats.csv",
        ("Error Type", *(f"{ax} ({AXIS_UNITS[ax]})" for ax in AXES)),
        ((row, *(getattr(ev.stats[ax], attrs[row]) for ax in AXES)) for row in ERROR_ROWS),
    )
    t_test = data.t[tensors.split.test]
    out.csv(
        prefix + "predictions.csv",
        ("t", *(f"{ax}_actual" for ax in AXES), *(f"{ax}_estimated" for ax in AXES)),
        ((t, *a, *p) for t, a, p in zip(t_test, ev.actual, ev.predictions)),
    )
    xs = list(range(len(t_test)))
    for i, ax in enumerate(AXES):
        out.text(
            f"{prefix}estimation_{ax}.svg",
            svg.line_chart(
                [
                    {"label": "actual", "x": xs, "y": ev.actual[:, i].tolist(), "color": svg.DARK_GRAY},
                    {"label": "estimated", "x": xs, "y": ev.predictions[:, i].tolist(), "color": svg.RED},
                ],
                title=f"{ax}: estimated vs actual on test rows",
                xlabel="test sample (time order)",
                ylabel=f"{ax} ({AXIS_UNITS[ax]})",
            ),
        )
    out.text(
        prefix + "loss_curve.svg",
        svg.line_chart(
            [{"label": "training loss", "x": list(range(1, len(report.epoch_losses) + 1)), "y": report.epoch_losses}],
            title="training loss",
            xlabel="epoch",
            ylabel="mean squared error",
        ),
    )
    return report, ev


def ablation_analysis(curves, alpha=0.05):
    """Per-ratio aggregates, Holm-corrected tests and redundancy checks for ablation curves."""
    ratios = curves[0].ratios
    agg = {}
    for metric, attr in (("mean", "mean_err"), ("max", "max_err")):
        for ax in ABLATION_AXES:
            vals = np.array([[getattr(p, attr)[ax] for p in c.points] for c in curves])
            agg[metric, ax] = (vals.mean(axis=0), vals.std(axis=0, ddof=1) if len(curves) > 1 else np.zeros(len(ratios)))
    result = {"n_trials": len(curves), "ratios": ratios, "aggregate": agg, "tests": {}, "first_significant": {}}
    if len(curves) >= 2:
        for metric in ("mean", "max"):
            for ax in ABLATION_AXES:
                tests = compare_to_baseline(curves, metric, ax, alpha)
                result["tests"][metric, ax] = tests
                hit = [t.ratio for t in tests if t.significant and t.increase]
                result["first_significant"][metric, ax] = hit[0] if hit else None
    # trials whose pitch error at every ratio >= 0.9 is above that trial's own baseline
    above = 0
    for c in curves:
        base = c.points[0].mean_err["pitch"]
        high = [p.mean_err["pitch"] for p in c.points if p.ratio >= 0.9 - 1e-12]
        above += bool(high) and min(high) > base
    result["trials_above_baseline_at_0.9"] = above
    # largest ratio up to which the across-trial mean attitude error stays within 2x baseline
    plateau = {}
    for ax in ABLATION_AXES:
        mean = agg["mean", ax][0]
        end = 0.0
        for r, v in zip(ratios[1:], mean[1:]):
            if v > 2.0 * mean[0]:
                break
            end = r
        plateau[ax] = end
    result["plateau_end"] = plateau
    result["first_ratio_mean_above_2deg"] = {
        ax: next((r for r, v in zip(ratios, agg["mean", ax][0]) if v > 2.0), None) for ax in ABLATION_AXES
    }
    return result


def stage_ablate(out, data, cfg, prefix=""):
    tensors = _tensors(data, cfg)
    curves = ablate(
        tensors,
        _train_config(cfg),
        n_trials=cfg["ablate.trials"],
        seeds=cfg.trial_seeds("ablate"),
        n_shuffles=cfg["ablate.n_shuffles"],
        n_jobs=cfg["ablate.jobs"],
    )
    out.csv(
        prefix + "ablation.csv",
        ("trial", "ratio", "axis", "mean_err", "max_err"),
        (
            (k, p.ratio, ax, p.mean_err[ax], p.max_err[ax])
            for k, c in enumerate(curves)
            for p in c.points
            for ax in ABLATION_AXES
        ),
    )
    out.csv(
        prefix + "ablation_removal_order.csv",
        ("trial", "seed", "step", "removed"),
        ((k, c.seed, i, label) for k, c in enumerate(curves) for i, label in enumerate(c.removal_order)),
    )
    res = ablation_analysis(curves)
    magnify = cfg["ablate.magnify"]
    for ax in ABLATION_AXES:
        series = []
        for metric, color in (("mean", svg.SERIES_COLORS[0]), ("max", svg.RED)):
            m, s = res["aggregate"][metric, ax]
            series.append(
                {"label": f"{metric} error", "x": res["ratios"], "y": m.tolist(), "err": (s * magnify).tolist(), "color": color}
            )
        out.text(
            f"{prefix}ablation_{ax}.svg",
            svg.line_chart(
                series,
                title=f"{ax} error vs reduction ratio ({res['n_trials']} trials, error bars std x{magnify:g})",
                xlabel="reduction ratio",
                ylabel=f"{ax} error (deg)",
                xmax=1.0,
            ),
        )
    if res["n_trials"] < 2:
        out.text(
            prefix + "ablation_summary.txt",
            f"Only {res['n_trials']} trial was run: across-trial significance testing needs at least two "
            "trials, so no statistical analysis was performed.\n",
        )
    else:
        out.csv(
            prefix + "ablation_tests.csv",
            ("metric", "axis", "ratio", "t", "df", "p", "p_adjusted", "significant", "increase"),
            (
                (metric, ax, t.ratio, t.t, t.df, t.p, t.p_adjusted, t.significant, t.increase)
                for (metric, ax), tests in res["tests"].items()
                for t in tests
            ),
        )
        out.csv(
            prefix + "ablation_summary.csv",
            ("metric", "axis", "first_significant_ratio", "reference_ratio", "holm_family"),
            (
                (metric, ax, res["first_significant"][metric, ax], REFERENCE_FIRST_SIGNIFICANT[metric, ax], f"{metric}/{ax}")
                for metric in ("mean", "max")
                for ax in ABLATION_AXES
            ),
        )
    return curves, res


def stage_attribute(out, data, cfg, criteria, prefix=""):
    results = {}
    for name in criteria:
        crit = Criterion(name)
        try:
            res = near_limit_attribution(
                data,
                crit,
                n_trials=cfg["attribute.trials"],
                seeds=cfg.trial_seeds("attribute"),
                train_config=_train_config(cfg),
                test_fraction=cfg["split.fraction"],
                split_seed=cfg["split.seed"],
                target_mode=cfg["targets.mode"],
                min_scale=cfg["inputs.min_scale"],
                n_permutations=cfg["attribute.n_permutations"],
                n_background=cfg["attribute.background"],
            )
        except ConfigError as exc:
            raise UserError(f"{crit.value}: {exc}") from None
        base = f"{prefix}{crit.value}/"
        rc = res.region_count
        highlight = rc.most_frequent[0] if rc.most_frequent else None
        for k, rep in enumerate(res.reports):
            rank = np.empty(len(rep.labels), dtype=int)
            rank[np.lexsort((np.arange(len(rep.labels)), -rep.aggregate))] = np.arange(1, len(rep.labels) + 1)
            out.csv(
                f"{base}shap_trial{k}.csv",
                ("label", "row", "score", "rank", "top3"),
                (
                    (label, capsule_sim.ROW_OF_LABEL[label].value, score, r, label in rep.top3)
                    for label, score, r in zip(rep.labels, rep.aggregate, rank)
                ),
            )
            lead = highlight if highlight in rep.top3 else rep.top3[0]
            out.text(
                f"{base}shap_trial{k}.svg",
                svg.bar_chart(
                    rep.labels,
                    rep.aggregate.tolist(),
                    svg.importance_colors(rep.labels, rep.aggregate, rep.top3, lead),
                    title=f"{crit.value}: receptor importance, trial {k} (seed {rep.seed})",
                    xlabel="receptor",
                    ylabel="mean |Shapley value|, summed over outputs",
                ),
            )
        ref = REFERENCE_REGION_COUNTS[crit.value]
        out.csv(
            f"{base}region_counts.csv",
            ("region", "count", "reference_count"),
            ((row.value, rc.counts[row], r) for row, r in zip(capsule_sim.ROWS, ref)),
        )
        out.csv(
            f"{base}top3_frequency.csv",
            ("label", "row", "trials_in_top3"),
            sorted(
                ((l, capsule_sim.ROW_OF_LABEL[l].value, f) for l, f in rc.frequency.items()),
                key=lambda r: (-r[2], capsule_sim.SENSOR_LABELS.index(r[0])),
            ),
        )
        out.csv(
            f"{base}subset.csv",
            ("criterion", "subset_size", "reference_subset_size", "n_train", "n_test"),
            [(crit.value, res.subset_size, REFERENCE_SUBSET_SIZES[crit], res.reports[0].n_train, res.reports[0].n_eval)],
        )
        results[crit.value] = res
    return results


def stage_drift(out, cfg, prefix=""):
    """Drift-enabled run of the same scenario; reports the offset at the final sample."""
    result = run_simulation(cfg, drift=True)
    offset = result.poses[-1] - result.true_poses[-1]
    out.csv(
        prefix + "drift_offsets.csv",
        ("axis", "final_offset", "reference_offset"),
        ((ax, float(v), ref) for ax, v, ref in zip(AXES, offset, capsule_sim.REFERENCE_DRIFT)),
    )
    return offset


# ---------------------------------------------------------------------------
# repro summary


def _check(name, passed, value, reference):
    return {"name": name, "passed": bool(passed), "value": value, "reference": reference}


def build_summary(ev, ablation, attributions, drift_offset, cfg):
    checks = []
    stats = {ax: {"max": s.max, "mean_abs": s.mean_abs, "std_abs": s.std_abs} for ax, s in ev.stats.items()}
    for ax in ("roll", "pitch", "yaw"):
        checks.append(_check(f"mean {ax} error <= 2 deg", stats[ax]["mean_abs"] <= 2.0, stats[ax]["mean_abs"], 2.0))
    for ax in ("x", "y", "z"):
        checks.append(_check(f"mean {ax} error <= 5 mm", stats[ax]["mean_abs"] <= 0.005, stats[ax]["mean_abs"], 0.005))
    doc = {
        "config": cfg.as_dict(),
        "estimation": {"achieved": stats, "reference": REFERENCE_ERRORS},
    }
    if ablation is not None:
        fs = ablation["first_significant"]
        n = ablation["n_trials"]
        doc["redundancy"] = {
            "n_trials": n,
            "first_significant_ratio": {f"{m}/{a}": fs.get((m, a)) for m in ("mean", "max") for a in ABLATION_AXES},
            "reference_first_significant_ratio": {f"{m}/{a}": r for (m, a), r in REFERENCE_FIRST_SIGNIFICANT.items()},
            "trials_above_baseline_at_0.9": ablation["trials_above_baseline_at_0.9"],
            "plateau_end": ablation["plateau_end"],
            "first_ratio_mean_above_2deg": ablation["first_ratio_mean_above_2deg"],
            "reference_first_ratio_mean_above_2deg": {"pitch": 0.457},
        }
        need = int(np.ceil(0.9 * n))
        checks.append(
            _check(
                "pitch error at ratio >= 0.9 above baseline in >= 90% of trials",
                ablation["trials_above_baseline_at_0.9"] >= need,
                ablation["trials_above_baseline_at_0.9"],
                need,
            )
        )
        if n >= 2:
            for ax in ABLATION_AXES:
                m, x = fs.get(("mean", ax)), fs.get(("max", ax))
                ok = m is not None and (x is None or m <= x)
                checks.append(_check(f"{ax}: first significant mean-error ratio <= max-error ratio", ok, [m, x], None))
        checks.append(
            _check(
                "redundancy plateau: error within 2x baseline at some nonzero ratio",
                all(v > 0 for v in ablation["plateau_end"].values()),
                ablation["plateau_end"],
                None,
            )
        )
    if attributions:
        doc["near_limit"] = {}
        for name, res in attributions.items():
            counts = [res.region_count.counts[row] for row in capsule_sim.ROWS]
            doc["near_limit"][name] = {
                "subset_size": res.subset_size,
                "reference_subset_size": REFERENCE_SUBSET_SIZES[Criterion(name)],
                "region_counts": dict(zip([r.value for r in capsule_sim.ROWS], counts)),
                "reference_region_counts": dict(zip([r.value for r in capsule_sim.ROWS], REFERENCE_REGION_COUNTS[name])),
                "top3": [list(r.top3) for r in res.reports],
                "in_all_trials": list(res.region_count.in_all_trials()),
            }
            if name in ("twist", "bend"):
                total = sum(counts)
                share = (counts[1] + counts[2]) / total if total else 0.0
                checks.append(
                    _check(f"{name}: >= 60% of top-3 in transitional or bone-attachment rows", share >= 0.6, share, 0.6)
                )
    if drift_offset is not None:
        doc["drift"] = {"final_offset": [float(v) for v in drift_offset], "reference": list(capsule_sim.REFERENCE_DRIFT)}
        checks.append(
            _check(
                "drift offsets at final sample",
                bool(np.allclose(drift_offset, capsule_sim.REFERENCE_DRIFT, rtol=0, atol=1e-12)),
                doc["drift"]["final_offset"],
                list(capsule_sim.REFERENCE_DRIFT),
            )
        )
    doc["checks"] = checks
    doc["all_passed"] = all(c["passed"] for c in checks)
    return doc


# ---------------------------------------------------------------------------
# commands


def _load_dataset(path):
    try:
        return read_csv(path)
    except OSError as exc:
        raise UserError(f"cannot read dataset {path}: {exc.strerror}") from None


def cmd_simulate(args, cfg, out, timings):
    t0 = time.perf_counter()
    data = stage_simulate(out, cfg)
    timings["simulate"] = time.perf_counter() - t0
    print(f"wrote {len(data)} records to {out.root / 'dataset.csv'}")


def cmd_train(args, cfg, out, timings):
    data = _load_dataset(args.dataset)
    t0 = time.perf_counter()
    _, ev = stage_train(out, data, cfg)
    timings["train"] = time.perf_counter() - t0
    for ax in AXES:
        print(f"{ax:>5}: mean |error| {ev.stats[ax].mean_abs:.4g} {AXIS_UNITS[ax]}")


def cmd_ablate(args, cfg, out, timings):
    data = _load_dataset(args.dataset)
    t0 = time.perf_counter()
    _, res = stage_ablate(out, data, cfg)
    timings["ablate"] = time.perf_counter() - t0
    if res["n_trials"] < 2:
        print("single trial: statistical summary suppressed")
    for (metric, ax), r in res["first_significant"].items():
        print(f"first significant {metric}-error increase, {ax}: {r}")


def cmd_attribute(args, cfg, out, timings):
    data = _load_dataset(args.dataset)
    t0 = time.perf_counter()
    results = stage_attribute(out, data, cfg, cfg["attribute.criteria"])
    timings["attribute"] = time.perf_counter() - t0
    for name, res in results.items():
        counts = ", ".join(f"{row.value} {res.region_count.counts[row]}" for row in capsule_sim.ROWS)
        print(f"{name}: subset {res.subset_size} (reference {REFERENCE_SUBSET_SIZES[res.criterion]}); top-3 regions: {counts}")


def cmd_repro(args, cfg, out, timings):
    t0 = time.perf_counter()
    data = stage_simulate(out, cfg, "simulate/")
    timings["simulate"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    _, ev = stage_train(out, data, cfg, "train/")
    timings["train"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    _, abl = stage_ablate(out, data, cfg, "ablate/")
    timings["ablate"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    attributions = stage_attribute(out, data, cfg, cfg["attribute.criteria"], "attribute/")
    timings["attribute"] = time.perf_counter() - t0
    drift = stage_drift(out, cfg, "drift/")
    summary = build_summary(ev, abl, attributions, drift, cfg)
    out.json("summary.json", summary)
    for c in summary["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}")


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "ablate": cmd_ablate,
    "attribute": cmd_attribute,
    "repro": cmd_repro,
}


def _int_list(text):
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--out", required=True, help="output directory")
    group = common.add_argument_group("config overrides")
    for key in KEYS:
        group.add_argument(f"--{key.name}", dest=key.name, metavar="VALUE", default=None, help=key.help)

    parser = argparse.ArgumentParser(prog="capsule-proprio", description="Joint-capsule receptor experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a recording and write the dataset CSV")
    p.add_argument("--seed", type=int, help="shorthand for --sim.seed")
    p.add_argument("--samples", type=int, help="shorthand for --sim.samples")

    p = sub.add_parser("train", parents=[common], help="train the pose network on a dataset CSV")
    p.add_argument("dataset")
    p.add_argument("--seed", type=int, help="shorthand for --train.init_seed and --train.seed")

    p = sub.add_parser("ablate", parents=[common], help="receptor ablation by permutation importance")
    p.add_argument("dataset")
    p.add_argument("--trials", type=int, help="shorthand for --ablate.trials")
    p.add_argument("--seeds", type=_int_list, help="shorthand for --ablate.seeds")
    p.add_argument("--magnify", type=float, help="shorthand for --ablate.magnify")

    p = sub.add_parser("attribute", parents=[common], help="near-limit Shapley attribution")
    p.add_argument("dataset")
    p.add_argument("--criterion", action="append", choices=[c.value for c in Criterion], help="repeatable")
    p.add_argument("--trials", type=int, help="shorthand for --attribute.trials")
    p.add_argument("--seeds", type=_int_list, help="shorthand for --attribute.seeds")

    sub.add_parser("repro", parents=[common], help="run the full pipeline and summarise against reference values")
    return parser


def _overrides(args):
    values = {k.name: getattr(args, k.name) for k in KEYS if getattr(args, k.name, None) is not None}
    cmd = args.command
    if cmd == "simulate":
        if args.seed is not None:
            values["sim.seed"] = args.seed
        if args.samples is not None:
            values["sim.samples"] = args.samples
    elif cmd == "train" and args.seed is not None:
        values["train.init_seed"] = values["train.seed"] = args.seed
    elif cmd in ("ablate", "attribute"):
        if args.trials is not None:
            values[f"{cmd}.trials"] = args.trials
        if args.seeds is not None:
            values[f"{cmd}.seeds"] = args.seeds
            values.setdefault(f"{cmd}.trials", len(args.seeds))
        if cmd == "ablate" and args.magnify is not None:
            values["ablate.magnify"] = args.magnify
        if cmd == "attribute" and args.criterion:
            values["attribute.criteria"] = tuple(dict.fromkeys(args.criterion))
    return values


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = None
    cfg = None
    timings = {}
    inputs = {"dataset": args.dataset} if getattr(args, "dataset", None) else {}
    if args.config:
        inputs["config"] = args.config
    try:
        cfg = load_config(args.config, _overrides(args))
        out = Outputs(args.out)
        COMMANDS[args.command](args, cfg, out, timings)
    except (CapsuleError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _final_manifest(out, args.command, cfg, inputs, timings, "failed", str(exc))
        return EXIT_USER
    except Exception as exc:  # noqa: BLE001 - last-resort reporting
        traceback.print_exc()
        _final_manifest(out, args.command, cfg, inputs, timings, "failed", f"internal error: {exc!r}")
        return EXIT_INTERNAL
    write_manifest(out, args.command, cfg, inputs, timings)
    return EXIT_OK


def _final_manifest(out, command, cfg, inputs, timings, status, error):
    if out is None or cfg is None:
        return
    try:
        write_manifest(out, command, cfg, inputs, timings, status, error)
    except OSError:
        pass


if __name__ == "__main__":
    sys.exit(main())
