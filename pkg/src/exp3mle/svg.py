"""Minimal deterministic SVG scatter rendering for experiment reports.

Hand-rolled on purpose: output bytes depend only on the data, and the
plots the harness needs are plain scatters with quantile markers and one
fitted curve.
"""

from __future__ import annotations

import math

_WIDTH = 640
_HEIGHT = 440
_MARGIN = 56


def _limits(values, pad=0.08):
    lo = min(values)
    hi = max(values)
    if lo == hi:
        lo -= 0.5
        hi += 0.5
    span = hi - lo
    return lo - pad * span, hi + pad * span


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def render_scatter(
    points,
    markers=None,
    curve=None,
    title: str = "",
    x_label: str = "n",
    y_label: str = "value",
) -> str:
    """Render points (small circles), markers (squares), and an optional
    polyline curve into a standalone SVG string."""
    markers = markers or []
    curve = curve or []
    everything = list(points) + list(markers) + list(curve)
    finite = [(x, y) for x, y in everything if math.isfinite(x) and math.isfinite(y)]
    if not finite:
        finite = [(0.0, 0.0), (1.0, 1.0)]
    x_lo, x_hi = _limits([p[0] for p in finite])
    y_lo, y_hi = _limits([p[1] for p in finite])

    def sx(x):
        return _MARGIN + (x - x_lo) / (x_hi - x_lo) * (_WIDTH - 2 * _MARGIN)

    def sy(y):
        return _HEIGHT - _MARGIN - (y - y_lo) / (y_hi - y_lo) * (_HEIGHT - 2 * _MARGIN)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<line x1="{_MARGIN}" y1="{_HEIGHT - _MARGIN}" x2="{_WIDTH - _MARGIN}" '
        f'y2="{_HEIGHT - _MARGIN}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" y2="{_HEIGHT - _MARGIN}" '
        f'stroke="black"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_WIDTH // 2}" y="24" text-anchor="middle" font-size="15">{title}</text>'
        )
    parts.append(
        f'<text x="{_WIDTH // 2}" y="{_HEIGHT - 14}" text-anchor="middle" font-size="12">'
        f"{x_label}</text>"
    )
    parts.append(
        f'<text x="16" y="{_HEIGHT // 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {_HEIGHT // 2})">{y_label}</text>'
    )
    for value, place in ((x_lo, "start"), (x_hi, "end")):
        parts.append(
            f'<text x="{_fmt(sx(value))}" y="{_HEIGHT - _MARGIN + 18}" text-anchor="{place}" '
            f'font-size="11">{_fmt(value)}</text>'
        )
    for value in (y_lo, y_hi):
        parts.append(
            f'<text x="{_MARGIN - 6}" y="{_fmt(sy(value) + 4)}" text-anchor="end" '
            f'font-size="11">{_fmt(value)}</text>'
        )

    if curve:
        coords = " ".join(
            f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in curve if math.isfinite(y)
        )
        parts.append(f'<polyline points="{coords}" fill="none" stroke="#c00" stroke-width="1.5"/>')
    for x, y in points:
        if math.isfinite(y):
            parts.append(f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="2.2" fill="#444"/>')
    for x, y in markers:
        if math.isfinite(y):
            parts.append(
                f'<rect x="{_fmt(sx(x) - 3.2)}" y="{_fmt(sy(y) - 3.2)}" width="6.4" height="6.4" '
                f'fill="#c00"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
