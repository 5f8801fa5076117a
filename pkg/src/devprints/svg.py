"""Minimal SVG line and bar charts (no rendering dependencies)."""

from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=150, top=40, bottom=55)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def _fmt(v: float) -> str:
    return f"{v:.3g}"


def _frame(title: str, xlabel: str, ylabel: str, comment: str) -> list[str]:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
    ]
    if comment:
        parts.append(f"<!-- {escape(comment.replace('--', '- -'))} -->")
    parts += [
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<text x="{MARGIN["left"] + _plot_w() / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="16" y="{MARGIN["top"] + _plot_h() / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {MARGIN["top"] + _plot_h() / 2})">{escape(ylabel)}</text>',
    ]
    return parts


def _plot_w() -> float:
    return WIDTH - MARGIN["left"] - MARGIN["right"]


def _plot_h() -> float:
    return HEIGHT - MARGIN["top"] - MARGIN["bottom"]


def _axes(x0: float, x1: float, y0: float, y1: float, xticks: Sequence[float] | None = None) -> list[str]:
    left, top = MARGIN["left"], MARGIN["top"]
    bottom = top + _plot_h()
    right = left + _plot_w()
    parts = [
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>',
    ]
    for v in _ticks(y0, y1):
        y = bottom - (v - y0) / ((y1 - y0) or 1) * _plot_h()
        parts.append(f'<line x1="{left - 4}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="black"/>')
        parts.append(f'<text x="{left - 7}" y="{y + 4:.1f}" text-anchor="end">{_fmt(v)}</text>')
    for v in xticks if xticks is not None else _ticks(x0, x1):
        x = left + (v - x0) / ((x1 - x0) or 1) * _plot_w()
        parts.append(f'<line x1="{x:.1f}" y1="{bottom}" x2="{x:.1f}" y2="{bottom + 4}" stroke="black"/>')
        parts.append(f'<text x="{x:.1f}" y="{bottom + 18}" text-anchor="middle">{_fmt(v)}</text>')
    return parts


def line_chart(series: Mapping[str, Sequence[tuple[float, float]]], title: str = "", xlabel: str = "",
               ylabel: str = "", comment: str = "") -> str:
    """One polyline with point markers per named series, plus a legend."""
    points = [p for pts in series.values() for p in pts]
    if not points:
        raise ValueError("line chart needs at least one point")
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if y0 == y1:
        y0, y1 = y0 - 0.5, y1 + 0.5
    if x0 == x1:
        x0, x1 = x0 - 1, x1 + 1
    integer_x = all(float(x).is_integer() for x in xs) and x1 - x0 <= 20
    xticks = list(range(int(x0), int(x1) + 1)) if integer_x else None
    parts = _frame(title, xlabel, ylabel, comment) + _axes(x0, x1, y0, y1, xticks)

    def sx(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * _plot_w()

    def sy(y):
        return MARGIN["top"] + _plot_h() - (y - y0) / (y1 - y0) * _plot_h()

    for i, (name, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        parts += [f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="3" fill="{color}"/>' for x, y in pts]
        ly = MARGIN["top"] + 16 * i
        lx = WIDTH - MARGIN["right"] + 12
        parts.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 24}" y="{ly + 4}">{escape(str(name))}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def bar_chart(labels: Sequence[str], values: Sequence[float], title: str = "", xlabel: str = "",
              ylabel: str = "", comment: str = "") -> str:
    if len(labels) != len(values) or not labels:
        raise ValueError("bar chart needs matching, nonempty labels and values")
    y0 = min(0.0, min(values))
    y1 = max(0.0, max(values)) or 1.0
    parts = _frame(title, xlabel, ylabel, comment) + _axes(0, 1, y0, y1, xticks=[])
    slot = _plot_w() / len(labels)
    base = MARGIN["top"] + _plot_h() - (0 - y0) / (y1 - y0) * _plot_h()
    for i, (label, v) in enumerate(zip(labels, values)):
        y = MARGIN["top"] + _plot_h() - (v - y0) / (y1 - y0) * _plot_h()
        x = MARGIN["left"] + i * slot + 0.15 * slot
        top, height = min(y, base), abs(base - y)
        parts.append(f'<rect x="{x:.1f}" y="{top:.1f}" width="{0.7 * slot:.1f}" height="{height:.1f}" '
                     f'fill="{PALETTE[i % len(PALETTE)]}"/>')
        parts.append(f'<text x="{x + 0.35 * slot:.1f}" y="{MARGIN["top"] + _plot_h() + 18}" '
                     f'text-anchor="middle">{escape(str(label))}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
