"""A minimal static SVG chart emitter (grouped bars and polylines)."""

from __future__ import annotations

from html import escape
from typing import Dict, Sequence

PALETTE = ("#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb")

_W, _H = 640, 360
_LEFT, _RIGHT, _TOP, _BOTTOM = 64, 150, 36, 48


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _nice_max(v: float) -> float:
    if v <= 0:
        return 1.0
    for m in (1, 2, 2.5, 5, 10):
        for e in range(-6, 10):
            top = m * 10.0 ** e
            if top >= v:
                return top
    return v


def _frame(title: str, ylabel: str, y_max: float) -> list:
    pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" font-family="sans-serif" font-size="11">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="14" y="{_TOP + ph / 2:.1f}" transform="rotate(-90 14 {_TOP + ph / 2:.1f})" '
        f'text-anchor="middle">{escape(ylabel)}</text>',
    ]
    for k in range(5):
        v = y_max * k / 4
        y = _TOP + ph * (1 - k / 4)
        out.append(f'<line x1="{_LEFT}" y1="{y:.1f}" x2="{_LEFT + pw}" y2="{y:.1f}" stroke="#dddddd"/>')
        out.append(f'<text x="{_LEFT - 6}" y="{y + 4:.1f}" text-anchor="end">{_fmt(v)}</text>')
    out.append(f'<line x1="{_LEFT}" y1="{_TOP + ph}" x2="{_LEFT + pw}" y2="{_TOP + ph}" stroke="black"/>')
    out.append(f'<line x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{_TOP + ph}" stroke="black"/>')
    return out


def _legend(names: Sequence[str]) -> list:
    out = []
    for k, name in enumerate(names):
        y = _TOP + 8 + 18 * k
        x = _W - _RIGHT + 12
        out.append(f'<rect x="{x}" y="{y - 9}" width="12" height="12" fill="{PALETTE[k % len(PALETTE)]}"/>')
        out.append(f'<text x="{x + 18}" y="{y + 1}">{escape(name)}</text>')
    return out


def bar_chart(title: str, ylabel: str, categories: Sequence[str], series: Dict[str, Sequence[float]]) -> str:
    """Grouped bars: one group per category, one bar per series."""
    names = list(series)
    values = [v for s in series.values() for v in s if v == v]
    y_max = _nice_max(max(values, default=1.0))
    pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM
    out = _frame(title, ylabel, y_max)
    n_cat = max(len(categories), 1)
    group_w = pw / n_cat
    bar_w = 0.8 * group_w / max(len(names), 1)
    for c, cat in enumerate(categories):
        x0 = _LEFT + c * group_w + 0.1 * group_w
        for s, name in enumerate(names):
            v = series[name][c]
            if v != v:  # NaN: leave a gap
                continue
            h = ph * v / y_max
            out.append(
                f'<rect x="{x0 + s * bar_w:.1f}" y="{_TOP + ph - h:.1f}" width="{bar_w * 0.9:.1f}" '
                f'height="{h:.1f}" fill="{PALETTE[s % len(PALETTE)]}"><title>{escape(name)}: {_fmt(v)}</title></rect>'
            )
        out.append(
            f'<text x="{_LEFT + (c + 0.5) * group_w:.1f}" y="{_TOP + ph + 16}" text-anchor="middle">{escape(cat)}</text>'
        )
    out += _legend(names)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_chart(title: str, ylabel: str, x: Sequence[float], series: Dict[str, Sequence[float]],
               reference: float = None) -> str:
    """Polylines over a shared numeric x axis, with an optional horizontal reference line."""
    names = list(series)
    values = [v for s in series.values() for v in s if v == v]
    if reference is not None:
        values.append(reference)
    y_max = _nice_max(max(values, default=1.0))
    pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM
    out = _frame(title, ylabel, y_max)
    x = list(x)
    lo, hi = (min(x), max(x)) if x else (0.0, 1.0)
    span = hi - lo or 1.0

    def px(v):
        return _LEFT + 0.05 * pw + 0.9 * pw * (v - lo) / span

    def py(v):
        return _TOP + ph * (1 - v / y_max)

    for v in x:
        out.append(f'<text x="{px(v):.1f}" y="{_TOP + ph + 16}" text-anchor="middle">{_fmt(v)}</text>')
    if reference is not None:
        out.append(f'<line x1="{_LEFT}" y1="{py(reference):.1f}" x2="{_LEFT + pw}" y2="{py(reference):.1f}" '
                   f'stroke="black" stroke-dasharray="4 3"/>')
    for s, name in enumerate(names):
        color = PALETTE[s % len(PALETTE)]
        pts = [(px(a), py(b)) for a, b in zip(x, series[name]) if b == b]
        if pts:
            path = " ".join(f"{a:.1f},{b:.1f}" for a, b in pts)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        for a, b in pts:
            out.append(f'<circle cx="{a:.1f}" cy="{b:.1f}" r="3" fill="{color}"/>')
    out += _legend(names)
    out.append("</svg>")
    return "\n".join(out) + "\n"
