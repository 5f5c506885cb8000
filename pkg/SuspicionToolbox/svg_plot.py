#!/usr/bin/python3
"""
Minimal SVG line plots for the diagnostics of the ``analyze`` command.

The plots are written as plain path elements; they are for inspection only
and their exact markup is not part of any file format.
"""

import math
from xml.sax.saxutils import escape

import numpy as np

from .logger import get_logger

logger = get_logger(__name__)

WIDTH = 640
HEIGHT = 360
MARGIN = 48


def _scale(values: np.ndarray, low: float, high: float, out_low: float, out_high: float) -> np.ndarray:
    span = high - low
    if span <= 0:
        return np.full(values.shape, (out_low + out_high) / 2.0)
    return out_low + (values - low) / span * (out_high - out_low)


def _path_segments(xs: np.ndarray, ys: np.ndarray) -> list[str]:
    # NaN values split the line into separate sub-paths
    segments, current = [], []
    for x, y in zip(xs, ys):
        if math.isnan(y):
            if current:
                segments.append(current)
            current = []
            continue
        current.append(f"{x:.2f},{y:.2f}")
    if current:
        segments.append(current)
    return ["M" + " L".join(points) for points in segments]


def line_plot_svg(values, title: str, x_label: str, y_label: str) -> str:
    """
    Render a series as an SVG polyline with axes and min/max labels.

    Args:
        values (array-like): Y values at x = 0, 1, ...; NaN leaves a gap
        title (str): Plot title
        x_label (str): Label of the horizontal axis
        y_label (str): Label of the vertical axis

    Returns:
        str: SVG document
    """
    ys = np.asarray(values, dtype=np.float64)
    finite = ys[np.isfinite(ys)]
    y_low, y_high = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if y_low == y_high:
        y_low, y_high = y_low - 0.5, y_high + 0.5
    x_high = max(ys.size - 1, 1)
    left, right, top, bottom = MARGIN, WIDTH - MARGIN / 2, MARGIN, HEIGHT - MARGIN
    px = _scale(np.arange(ys.size, dtype=np.float64), 0.0, float(x_high), left, right)
    py = np.where(np.isfinite(ys), _scale(np.nan_to_num(ys), y_low, y_high, bottom, top), np.nan)
    paths = "\n".join(f'  <path d="{d}" fill="none" stroke="#c0392b" stroke-width="1.5"/>'
                      for d in _path_segments(px, py))
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'  <rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'  <text x="{WIDTH / 2}" y="{MARGIN / 2}" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'  <line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
        f'  <line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>',
        f'  <text x="{left - 4}" y="{bottom}" text-anchor="end">{y_low:.3g}</text>',
        f'  <text x="{left - 4}" y="{top + 4}" text-anchor="end">{y_high:.3g}</text>',
        f'  <text x="{left}" y="{bottom + 16}" text-anchor="middle">0</text>',
        f'  <text x="{right}" y="{bottom + 16}" text-anchor="middle">{x_high}</text>',
        f'  <text x="{(left + right) / 2}" y="{HEIGHT - 8}" text-anchor="middle">{escape(x_label)}</text>',
        f'  <text x="14" y="{(top + bottom) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {(top + bottom) / 2})">{escape(y_label)}</text>',
        paths,
        '</svg>',
        '',
    ])


def save_line_plot(values, path: str, title: str, x_label: str, y_label: str) -> None:
    """Write line_plot_svg output to ``path``."""
    with open(path, 'w', encoding='utf-8') as f:
        f.write(line_plot_svg(values, title, x_label, y_label))
    logger.debug("Wrote plot '%s' to %s", title, path)
