"""Error summaries, Welch's t-test and Holm step-down correction.

The Student-t tail is computed from the regularised incomplete beta function,
evaluated with a modified-Lentz continued fraction, so the test has no
dependency on a statistics library.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ALPHA = 0.05


@dataclass(frozen=True)
class ErrorStats:
    max: float
    mean_abs: float
    std_abs: float


def error_stats(predicted, actual):
    """Max, mean and sample standard deviation (n-1) of the absolute errors."""
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.shape != actual.shape:
        raise ValueError(f"shape mismatch {predicted.shape} vs {actual.shape}")
    if predicted.size == 0:
        raise ValueError("error statistics need at least one sample")
    err = np.abs(predicted - actual)
    std = float(np.std(err, ddof=1)) if err.size > 1 else 0.0
    return ErrorStats(max=float(err.max()), mean_abs=float(err.mean()), std_abs=std)


def _betacf(a, b, x, tol=1e-12, max_iter=10_000):
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a, b, x):
    """Regularised incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t, df):
    """P(|T| >= |t|) for Student's t with ``df`` (real) degrees of freedom."""
    if math.isinf(t):
        return 0.0
    if math.isnan(t):
        return float("nan")
    return betainc(df / 2.0, 0.5, df / (df + t * t))


def t_cdf(t, df):
    tail = 0.5 * t_sf_two_sided(t, df)
    return 1.0 - tail if t > 0 else tail


def welch_t_test(sample_a, sample_b):
    """Two-sided Welch test. Returns (t, df, p) with Welch-Satterthwaite df."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("Welch's test needs at least two observations per sample")
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se2 = va + vb
    if se2 == 0.0:
        if ma == mb:
            return 0.0, float("nan"), 1.0
        return math.copysign(math.inf, ma - mb), float("nan"), 0.0
    t = (ma - mb) / math.sqrt(se2)
    df = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    return float(t), float(df), float(t_sf_two_sided(t, df))


def holm_correct(p_values, alpha=ALPHA):
    """Holm step-down adjusted p-values (original order) and rejection flags."""
    p = np.asarray(p_values, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    adjusted_sorted = np.minimum(1.0, (m - np.arange(m)) * p[order])
    adjusted_sorted = np.maximum.accumulate(adjusted_sorted)
    adjusted = np.empty(m)
    adjusted[order] = adjusted_sorted
    return adjusted, adjusted < alpha


@dataclass(frozen=True)
class StatTestResult:
    ratio: float
    t: float
    df: float
    p: float
    p_adjusted: float
    significant: bool
    increase: bool


def compare_to_baseline(curves, metric, axis, alpha=ALPHA):
    """Welch-test every nonzero reduction ratio against ratio 0, Holm-corrected.

    One Holm family per (metric, axis).  ``curves`` are ablation curves whose
    points expose ``ratio`` and ``mean_err``/``max_err`` mappings keyed by axis.
    """
    if len(curves) < 2:
        raise ValueError("significance testing needs at least two trials")
    attr = {"mean": "mean_err", "max": "max_err"}[metric]
    by_ratio = {}
    for curve in curves:
        for pt in curve.points:
            by_ratio.setdefault(round(pt.ratio, 12), []).append(getattr(pt, attr)[axis])
    if 0.0 not in by_ratio or len(by_ratio[0.0]) != len(curves):
        raise ValueError("every curve needs a baseline point at ratio 0")
    baseline = np.array(by_ratio.pop(0.0))
    ratios = sorted(r for r, v in by_ratio.items() if len(v) >= 2)
    if not ratios:
        return []
    tests = [welch_t_test(by_ratio[r], baseline) for r in ratios]
    adjusted, flags = holm_correct([p for _, _, p in tests], alpha)
    return [
        StatTestResult(r, t, df, p, float(pa), bool(f), bool(np.mean(by_ratio[r]) > baseline.mean()))
        for r, (t, df, p), pa, f in zip(ratios, tests, adjusted, flags)
    ]


def first_significant_ratio(curves, metric="mean", axis="pitch", alpha=ALPHA):
    """Smallest reduction ratio whose error is significantly above baseline, or None."""
    for res in compare_to_baseline(curves, metric, axis, alpha):
        if res.significant and res.increase:
            return res.ratio
    return None
