"""Minimal deterministic SVG line/scatter charts (no plotting dependency).

Output is a standalone SVG document with axes, tick labels, one polyline
with point markers per series, and a legend.  Identical input produces
byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Series", "render_svg"]

_PALETTE = ("#1f6fb2", "#d1495b", "#3a9d5d", "#8a5bc7", "#c98a1f", "#4d4d4d")
_WIDTH, _HEIGHT = 640, 440
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 160, 40, 55


@dataclass(frozen=True, eq=False)
class Series:
    label: str
    xs: np.ndarray
    ys: np.ndarray

    def __init__(self, label, xs, ys):
        xs = np.asarray(xs, dtype=np.float64).ravel()
        ys = np.asarray(ys, dtype=np.float64).ravel()
        if xs.size == 0 or xs.size != ys.size:
            raise ValueError("series needs matching nonempty x/y arrays")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError("series values must be finite")
        object.__setattr__(self, "label", str(label))
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    return np.linspace(lo, hi, n)


def render_svg(series, path, title: str = "", xlabel: str = "",
               ylabel: str = "") -> None:
    """Write the chart; refuses an empty series list."""
    if not series:
        raise ValueError("no series to plot")
    series = [s if isinstance(s, Series) else Series(*s) for s in series]
    x_lo = min(s.xs.min() for s in series)
    x_hi = max(s.xs.max() for s in series)
    y_lo = min(s.ys.min() for s in series)
    y_hi = max(s.ys.max() for s in series)
    if x_hi <= x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi <= y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad_x = 0.04 * (x_hi - x_lo)
    pad_y = 0.06 * (y_hi - y_lo)
    x_lo, x_hi = x_lo - pad_x, x_hi + pad_x
    y_lo, y_hi = y_lo - pad_y, y_hi + pad_y

    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def px(x):
        return _MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        return _MARGIN_T + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="#ffffff"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_MARGIN_L + plot_w / 2:.1f}" y="24" '
            f'text-anchor="middle" font-family="sans-serif" font-size="15">'
            f'{title}</text>')
    # frame
    parts.append(
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="#333333"/>')
    for tx in _ticks(x_lo + pad_x, x_hi - pad_x):
        parts.append(
            f'<line x1="{_fmt(px(tx))}" y1="{_MARGIN_T + plot_h}" '
            f'x2="{_fmt(px(tx))}" y2="{_MARGIN_T + plot_h + 5}" stroke="#333333"/>')
        parts.append(
            f'<text x="{_fmt(px(tx))}" y="{_MARGIN_T + plot_h + 20}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="11">'
            f'{_fmt(round(tx, 10))}</text>')
    for ty in _ticks(y_lo + pad_y, y_hi - pad_y):
        parts.append(
            f'<line x1="{_MARGIN_L - 5}" y1="{_fmt(py(ty))}" '
            f'x2="{_MARGIN_L}" y2="{_fmt(py(ty))}" stroke="#333333"/>')
        parts.append(
            f'<text x="{_MARGIN_L - 9}" y="{_fmt(py(ty) + 4)}" '
            f'text-anchor="end" font-family="sans-serif" font-size="11">'
            f'{_fmt(round(ty, 10))}</text>')
    if xlabel:
        parts.append(
            f'<text x="{_MARGIN_L + plot_w / 2:.1f}" y="{_HEIGHT - 14}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="13">'
            f'{xlabel}</text>')
    if ylabel:
        cx, cy = 20, _MARGIN_T + plot_h / 2
        parts.append(
            f'<text x="{cx}" y="{cy:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13" '
            f'transform="rotate(-90 {cx} {cy:.1f})">{ylabel}</text>')
    for s_idx, s in enumerate(series):
        color = _PALETTE[s_idx % len(_PALETTE)]
        pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}"
                       for x, y in zip(s.xs, s.ys))
        if s.xs.size > 1:
            parts.append(f'<polyline points="{pts}" fill="none" '
                         f'stroke="{color}" stroke-width="1.6"/>')
        for x, y in zip(s.xs, s.ys):
            parts.append(f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" '
                         f'r="3" fill="{color}"/>')
        ly = _MARGIN_T + 14 + 18 * s_idx
        lx = _WIDTH - _MARGIN_R + 12
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="1.6"/>')
        parts.append(f'<text x="{lx + 28}" y="{ly}" font-family="sans-serif" '
                     f'font-size="12">{s.label}</text>')
    parts.append("</svg>")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(parts) + "\n")
