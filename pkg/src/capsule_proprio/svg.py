"""Small SVG line and bar charts with fixed number formatting (diff-friendly)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

RED = "#d62728"
DARK_GRAY = "#4d4d4d"
SERIES_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd")

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=20, top=40, bottom=60)


def _f(v):
    return f"{v:.2f}"


def _nice_max(v):
    if not math.isfinite(v) or v <= 0:
        return 1.0
    exp = 10 ** math.floor(math.log10(v))
    for m in (1, 2, 2.5, 5, 10):
        if m * exp >= v:
            return m * exp
    return 10 * exp


def _frame(title, xlabel, ylabel, body):
    w, h = WIDTH, HEIGHT
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<text x="{w / 2}" y="22" text-anchor="middle" font-size="15" font-family="sans-serif">{escape(title)}</text>',
        f'<text x="{w / 2}" y="{h - 12}" text-anchor="middle" font-size="12" font-family="sans-serif">{escape(xlabel)}</text>',
        f'<text x="16" y="{h / 2}" text-anchor="middle" font-size="12" font-family="sans-serif" '
        f'transform="rotate(-90 16 {h / 2})">{escape(ylabel)}</text>',
    ]
    return "\n".join(parts + body + ["</svg>"]) + "\n"


def _axes(x0, x1, y0, y1, ymax, n_ticks=5, ymin=0.0):
    out = [
        f'<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
    ]
    for i in range(n_ticks + 1):
        v = ymin + (ymax - ymin) * i / n_ticks
        y = y1 - (y1 - y0) * i / n_ticks
        out.append(f'<line x1="{x0 - 4}" y1="{_f(y)}" x2="{x0}" y2="{_f(y)}" stroke="black"/>')
        out.append(
            f'<text x="{x0 - 6}" y="{_f(y + 4)}" text-anchor="end" font-size="10" font-family="sans-serif">{v:g}</text>'
        )
    return out


def line_chart(series, title="", xlabel="", ylabel="", xmax=None):
    """``series``: list of dicts with ``label``, ``x``, ``y`` and optional ``err`` (half-height)."""
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = MARGIN["top"], HEIGHT - MARGIN["bottom"]
    xs = [x for s in series for x in s["x"]]
    tops, bottoms = [0.0], [0.0]
    for s in series:
        errs = s.get("err") or [0.0] * len(s["y"])
        tops += [y + e for y, e in zip(s["y"], errs)]
        bottoms += [y - e for y, e in zip(s["y"], errs)]
    xmax = xmax if xmax is not None else (max(xs) if xs else 1.0)
    xmax = xmax if xmax > 0 else 1.0
    ymax = _nice_max(max(tops))
    ymin = -_nice_max(-min(bottoms)) if min(bottoms) < 0 else 0.0
    if max(tops) <= 0 < -min(bottoms):
        ymax = 0.0

    def px(x):
        return x0 + (x1 - x0) * x / xmax

    def py(y):
        return y1 - (y1 - y0) * (min(max(y, ymin), ymax) - ymin) / (ymax - ymin)

    body = _axes(x0, x1, y0, y1, ymax, ymin=ymin)
    for i in range(5):
        v = xmax * i / 4
        body.append(
            f'<text x="{_f(px(v))}" y="{y1 + 16}" text-anchor="middle" font-size="10" font-family="sans-serif">{v:g}</text>'
        )
    for k, s in enumerate(series):
        color = s.get("color", SERIES_COLORS[k % len(SERIES_COLORS)])
        pts = " ".join(f"{_f(px(x))},{_f(py(y))}" for x, y in zip(s["x"], s["y"]))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y, e in zip(s["x"], s["y"], s.get("err") or []):
            body.append(
                f'<line x1="{_f(px(x))}" y1="{_f(py(y - e))}" x2="{_f(px(x))}" y2="{_f(py(y + e))}" '
                f'stroke="{color}" stroke-width="0.8"/>'
            )
        ly = y0 + 14 * k
        body.append(f'<line x1="{x1 - 140}" y1="{ly}" x2="{x1 - 120}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        body.append(
            f'<text x="{x1 - 115}" y="{ly + 4}" font-size="11" font-family="sans-serif">{escape(s["label"])}</text>'
        )
    return _frame(title, xlabel, ylabel, body)


def _shade(fraction):
    """Light-to-saturated red-orange for the non-leading top-3 bars."""
    fraction = min(max(fraction, 0.0), 1.0)
    g = int(round(200 - 90 * fraction))
    b = int(round(170 - 120 * fraction))
    return f"#f4{g:02x}{b:02x}"


def importance_colors(labels, scores, top3, highlight):
    """Red for the highlighted top-3 label, shaded by score for the other top-3, dark gray otherwise."""
    top = [s for l, s in zip(labels, scores) if l in top3]
    lo, hi = (min(top), max(top)) if top else (0.0, 1.0)
    colors = []
    for label, score in zip(labels, scores):
        if label == highlight:
            colors.append(RED)
        elif label in top3:
            colors.append(_shade((score - lo) / (hi - lo) if hi > lo else 1.0))
        else:
            colors.append(DARK_GRAY)
    return colors


def bar_chart(labels, values, colors, title="", xlabel="", ylabel=""):
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = MARGIN["top"], HEIGHT - MARGIN["bottom"]
    ymax = _nice_max(max(values) if len(values) else 1.0)
    n = max(len(values), 1)
    slot = (x1 - x0) / n
    body = _axes(x0, x1, y0, y1, ymax)
    for i, (label, v, c) in enumerate(zip(labels, values, colors)):
        hgt = (y1 - y0) * min(max(v, 0.0), ymax) / ymax
        x = x0 + i * slot + 0.1 * slot
        body.append(
            f'<rect x="{_f(x)}" y="{_f(y1 - hgt)}" width="{_f(0.8 * slot)}" height="{_f(hgt)}" fill="{c}">'
            f"<title>{escape(label)}</title></rect>"
        )
        tx = x + 0.4 * slot
        body.append(
            f'<text x="{_f(tx)}" y="{y1 + 6}" font-size="6" font-family="sans-serif" '
            f'transform="rotate(90 {_f(tx)} {y1 + 6})">{escape(label)}</text>'
        )
    return _frame(title, xlabel, ylabel, body)
