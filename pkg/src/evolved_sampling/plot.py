"""Dependency-free SVG line chart: test accuracy against cumulative BP samples."""

from __future__ import annotations

import csv
import io
import math
from xml.sax.saxutils import escape

from evolved_sampling.errors import FormatError
from evolved_sampling.trainer import METRICS_COLUMNS

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
WIDTH, HEIGHT = 720, 440
LEFT, RIGHT, TOP, BOTTOM = 70, 190, 30, 60


def read_metrics(text: str) -> dict[str, list[tuple[float, float]]]:
    """Series ``run_id -> [(cum_bp_samples, test_acc), ...]`` in file order."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise FormatError("metrics CSV is empty")
    missing = [c for c in METRICS_COLUMNS if c not in header]
    if missing:
        raise FormatError(f"row 1: header lacks column(s) {', '.join(missing)}")
    col = {name: header.index(name) for name in METRICS_COLUMNS}
    series: dict[str, list[tuple[float, float]]] = {}
    for rowno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise FormatError(f"row {rowno}: expected {len(header)} fields, got {len(row)}")
        try:
            bp = float(int(row[col["cum_bp_samples"]]))
            acc = float(row[col["test_acc"]])
        except ValueError as exc:
            raise FormatError(f"row {rowno}: {exc}") from None
        if not math.isfinite(acc):
            raise FormatError(f"row {rowno}: test_acc is not finite")
        series.setdefault(row[col["run_id"]], []).append((bp, acc))
    if not series:
        raise FormatError("metrics CSV has no data rows")
    return series


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-9 * step:
        out.append(round(v, 10))
        v += step
    return out


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    if abs(v) >= 1e6:
        return f"{v / 1e6:g}M"
    if abs(v) >= 1e3:
        return f"{v / 1e3:g}k"
    return f"{v:g}"


def render_svg(series: dict[str, list[tuple[float, float]]]) -> str:
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    x_lo, x_hi = 0.0, max(xs) if max(xs) > 0 else 1.0
    y_lo, y_hi = min(ys), max(ys)
    pad = (y_hi - y_lo) * 0.05 or 0.01
    y_lo, y_hi = max(0.0, y_lo - pad), min(1.0, y_hi + pad) if y_hi <= 1.0 else y_hi + pad
    if y_hi <= y_lo:
        y_hi = y_lo + 0.01
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(x):
        return LEFT + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return TOP + ph - (y - y_lo) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<g id="axes" stroke="black" stroke-width="1">'
        f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}"/>'
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}"/></g>',
    ]
    for t in _ticks(x_lo, x_hi):
        x = _fmt(px(t))
        out.append(
            f'<line x1="{x}" y1="{TOP + ph}" x2="{x}" y2="{TOP + ph + 5}" stroke="black"/>'
            f'<text x="{x}" y="{TOP + ph + 18}" text-anchor="middle">{_label(t)}</text>'
        )
    for t in _ticks(y_lo, y_hi):
        y = _fmt(py(t))
        out.append(
            f'<line x1="{LEFT - 5}" y1="{y}" x2="{LEFT}" y2="{y}" stroke="black"/>'
            f'<text x="{LEFT - 8}" y="{y}" text-anchor="end" dominant-baseline="middle">{t:g}</text>'
        )
    out.append(
        f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 15}" text-anchor="middle">'
        "cumulative back-propagated samples</text>"
    )
    out.append(
        f'<text x="18" y="{TOP + ph / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {TOP + ph / 2:.2f})">test accuracy</text>'
    )
    for i, (run_id, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = TOP + 10 + 18 * i
        lx = LEFT + pw + 15
        out.append(
            f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>'
            f'<text x="{lx + 26}" y="{ly}" dominant-baseline="middle">{escape(run_id)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
