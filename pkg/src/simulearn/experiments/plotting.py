"""Minimal standalone SVG line plots.

Hand-assembled markup keeps the output byte-for-byte reproducible (no
renderer state, no timestamps).  Supports multiple series with markers, a
legend, axis ticks, and a dashed horizontal reference line for a baseline
value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 30, 40, 50
COLORS = ("#1f77b4", "#2ca02c", "#9467bd", "#e377c2", "#17becf", "#8c564b")
BASELINE_COLOR = "#d62728"


@dataclass(frozen=True)
class Series:
    label: str
    xs: tuple[float, ...]
    ys: tuple[float, ...]


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def render_plot(
    series: Sequence[Series],
    *,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    baseline: float | None = None,
    baseline_label: str = "baseline",
) -> str:
    """Render the series to an SVG document string."""
    if not series:
        raise ValueError("need at least one series")
    for s in series:
        if len(s.xs) != len(s.ys) or not s.xs:
            raise ValueError(f"series {s.label!r} must have matching non-empty x/y")
        values = list(s.xs) + list(s.ys)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"series {s.label!r} contains non-finite values")
    if baseline is not None and not math.isfinite(baseline):
        raise ValueError("baseline must be finite")

    all_x = [x for s in series for x in s.xs]
    all_y = [y for s in series for y in s.ys]
    if baseline is not None:
        all_y.append(baseline)
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(x):
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return MARGIN_T + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>'
        )
    # axes
    parts.append(
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" '
        f'y2="{MARGIN_T + plot_h}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T + plot_h}" x2="{MARGIN_L + plot_w}" '
        f'y2="{MARGIN_T + plot_h}" stroke="black"/>'
    )
    for tick in _ticks(x_lo, x_hi):
        px = sx(tick)
        parts.append(
            f'<line x1="{px:.1f}" y1="{MARGIN_T + plot_h}" x2="{px:.1f}" '
            f'y2="{MARGIN_T + plot_h + 5}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{px:.1f}" y="{MARGIN_T + plot_h + 18}" text-anchor="middle">{_fmt(tick)}</text>'
        )
    for tick in _ticks(y_lo, y_hi):
        py = sy(tick)
        parts.append(
            f'<line x1="{MARGIN_L - 5}" y1="{py:.1f}" x2="{MARGIN_L}" y2="{py:.1f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{MARGIN_L - 8}" y="{py + 4:.1f}" text-anchor="end">{_fmt(tick)}</text>'
        )
    if xlabel:
        parts.append(
            f'<text x="{MARGIN_L + plot_w / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>'
        )
    if ylabel:
        cx, cy = 18, MARGIN_T + plot_h / 2
        parts.append(
            f'<text x="{cx}" y="{cy:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 {cx} {cy:.1f})">{escape(ylabel)}</text>'
        )
    if baseline is not None:
        py = sy(baseline)
        parts.append(
            f'<line x1="{MARGIN_L}" y1="{py:.1f}" x2="{MARGIN_L + plot_w}" y2="{py:.1f}" '
            f'stroke="{BASELINE_COLOR}" stroke-dasharray="6,4"/>'
        )
    for i, s in enumerate(series):
        color = COLORS[i % len(COLORS)]
        points = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(s.xs, s.ys))
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in zip(s.xs, s.ys):
            parts.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="3" fill="{color}"/>')
    # legend, top-right inside the plot area
    legend_entries = [(s.label, COLORS[i % len(COLORS)], False) for i, s in enumerate(series)]
    if baseline is not None:
        legend_entries.append((baseline_label, BASELINE_COLOR, True))
    ly = MARGIN_T + 8
    lx = MARGIN_L + plot_w - 150
    for label, color, dashed in legend_entries:
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        parts.append(
            f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>'
        )
        parts.append(f'<text x="{lx + 30}" y="{ly + 4}" class="legend">{escape(label)}</text>')
        ly += 18
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plot(
    series: Sequence[Series],
    path: str | Path,
    *,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    baseline: float | None = None,
    baseline_label: str = "baseline",
) -> Path:
    """Write the plot to ``path`` and return it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        render_plot(
            series,
            title=title,
            xlabel=xlabel,
            ylabel=ylabel,
            baseline=baseline,
            baseline_label=baseline_label,
        )
    )
    return path
