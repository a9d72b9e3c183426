"""Dependency-free SVG line charts for loss curves and sweep plots."""

from __future__ import annotations

import math
from pathlib import Path

from .errors import ConfigError

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]
_W, _H = 640, 400
_ML, _MR, _MT, _MB = 70, 20, 40, 50  # margins


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        lo_e = math.floor(math.log10(lo))
        hi_e = math.ceil(math.log10(hi))
        return [10.0**e for e in range(lo_e, hi_e + 1)
                if lo <= 10.0**e <= hi] or [lo, hi]
    span = hi - lo
    if span <= 0:
        return [lo]
    step = 10.0 ** math.floor(math.log10(span / 4))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= 6:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + step * 1e-9:
        out.append(v)
        v += step
    return out


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.0e}"
    return f"{v:g}"


def line_plot(series: dict[str, tuple], path: str | Path, title: str = "",
              xlabel: str = "", ylabel: str = "", logx: bool = False,
              logy: bool = False) -> None:
    """Write a line chart; series maps label -> (xs, ys). Points that are
    not finite (or not positive on a log axis) are dropped."""
    if not series:
        raise ConfigError("no series to plot")
    for label, (xs, ys) in series.items():
        if len(xs) != len(ys):
            raise ConfigError(f"series {label!r}: x/y length mismatch")

    def keep(x, y):
        return (math.isfinite(x) and math.isfinite(y)
                and (not logx or x > 0) and (not logy or y > 0))

    pts_all = [(float(x), float(y)) for xs, ys in series.values()
               for x, y in zip(xs, ys) if keep(float(x), float(y))]
    if not pts_all:
        raise ConfigError("no plottable points")
    xs_all = [p[0] for p in pts_all]
    ys_all = [p[1] for p in pts_all]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1
    if y_hi == y_lo:
        y_hi = y_lo + (abs(y_lo) or 1) * 0.1

    def tx(x):
        if logx:
            f = (math.log(x) - math.log(x_lo)) / \
                (math.log(x_hi) - math.log(x_lo))
        else:
            f = (x - x_lo) / (x_hi - x_lo)
        return _ML + f * (_W - _ML - _MR)

    def ty(y):
        if logy:
            f = (math.log(y) - math.log(y_lo)) / \
                (math.log(y_hi) - math.log(y_lo))
        else:
            f = (y - y_lo) / (y_hi - y_lo)
        return _H - _MB - f * (_H - _MT - _MB)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
             f'height="{_H}" viewBox="0 0 {_W} {_H}">',
             f'<rect width="{_W}" height="{_H}" fill="white"/>']
    if title:
        parts.append(f'<text x="{_W/2}" y="24" text-anchor="middle" '
                     f'font-size="16">{title}</text>')
    # axes
    parts.append(f'<line x1="{_ML}" y1="{_H-_MB}" x2="{_W-_MR}" '
                 f'y2="{_H-_MB}" stroke="black"/>')
    parts.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H-_MB}" '
                 f'stroke="black"/>')
    for v in _ticks(x_lo, x_hi, logx):
        px = tx(v)
        parts.append(f'<line x1="{px:.1f}" y1="{_H-_MB}" x2="{px:.1f}" '
                     f'y2="{_H-_MB+5}" stroke="black"/>')
        parts.append(f'<text x="{px:.1f}" y="{_H-_MB+18}" '
                     f'text-anchor="middle" font-size="11">{_fmt(v)}</text>')
    for v in _ticks(y_lo, y_hi, logy):
        py = ty(v)
        parts.append(f'<line x1="{_ML-5}" y1="{py:.1f}" x2="{_ML}" '
                     f'y2="{py:.1f}" stroke="black"/>')
        parts.append(f'<text x="{_ML-8}" y="{py+4:.1f}" text-anchor="end" '
                     f'font-size="11">{_fmt(v)}</text>')
    if xlabel:
        parts.append(f'<text x="{(_ML+_W-_MR)/2}" y="{_H-12}" '
                     f'text-anchor="middle" font-size="13">{xlabel}</text>')
    if ylabel:
        parts.append(f'<text x="16" y="{(_MT+_H-_MB)/2}" font-size="13" '
                     f'text-anchor="middle" transform="rotate(-90 16 '
                     f'{(_MT+_H-_MB)/2})">{ylabel}</text>')
    for i, (label, (xs, ys)) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(
            f"{tx(float(x)):.1f},{ty(float(y)):.1f}"
            for x, y in zip(xs, ys) if keep(float(x), float(y)))
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        ly = _MT + 16 + 16 * i
        parts.append(f'<line x1="{_W-_MR-120}" y1="{ly-4}" '
                     f'x2="{_W-_MR-95}" y2="{ly-4}" stroke="{color}" '
                     f'stroke-width="2"/>')
        parts.append(f'<text x="{_W-_MR-90}" y="{ly}" '
                     f'font-size="12">{label}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))
