"""Polar scatter of recovery records as a standalone SVG document.

The angular coordinate is the tilt direction alpha (0 deg to the right,
counter-clockwise) and the radius is the tilt beta.  Output is plain text
built with fixed number formatting, so identical records give identical bytes.
"""
from __future__ import annotations

import math

RECOVERED_COLOR = "#f2c40f"  # yellow
FAILED_COLOR = "#5b2a86"  # purple
WHEEL_COLOR = "#222222"
GRID_COLOR = "#bbbbbb"


def _f(v) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def emit_svg_polar(records, wheel_alphas=(math.radians(90), math.radians(210), math.radians(330)),
                   beta_max_deg=None, size=480, title="recovery area") -> str:
    """SVG for ``records`` (anything with alpha, beta, recovered in radians)."""
    recs = list(records)
    if beta_max_deg is None:
        top = max((math.degrees(r.beta) for r in recs), default=15.0)
        beta_max_deg = max(5.0, 5.0 * math.ceil(top / 5.0 - 1e-9))
    cx = cy = size / 2
    radius = size / 2 - 40
    scale = radius / beta_max_deg

    def xy(alpha, beta_deg):
        # svg y grows downwards
        return cx + beta_deg * scale * math.cos(alpha), cy - beta_deg * scale * math.sin(alpha)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<title>{title}</title>',
           f'<rect width="{size}" height="{size}" fill="white"/>',
           '<g id="axes" fill="none" stroke="%s" stroke-width="0.8">' % GRID_COLOR]
    step = 5.0 if beta_max_deg > 10 else 1.0 if beta_max_deg <= 5 else 2.0
    ticks = [step * i for i in range(1, int(beta_max_deg / step + 1e-9) + 1)]
    for t in ticks:
        out.append(f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(t * scale)}"/>')
    for a_deg in range(0, 360, 30):
        x, y = xy(math.radians(a_deg), beta_max_deg)
        out.append(f'<line x1="{_f(cx)}" y1="{_f(cy)}" x2="{_f(x)}" y2="{_f(y)}"/>')
    out.append("</g>")
    out.append('<g id="labels" font-family="sans-serif" font-size="11" fill="#444444" '
               'text-anchor="middle">')
    for t in ticks:
        x, y = xy(math.radians(15), t)
        out.append(f'<text x="{_f(x)}" y="{_f(y)}">{t:g}&#176;</text>')
    for a_deg in range(0, 360, 30):
        x, y = xy(math.radians(a_deg), beta_max_deg * 1.08)
        out.append(f'<text x="{_f(x)}" y="{_f(y + 4)}">{a_deg}&#176;</text>')
    out.append("</g>")
    out.append(f'<g id="wheels" stroke="{WHEEL_COLOR}" stroke-width="2">')
    for w in wheel_alphas:
        x, y = xy(w, beta_max_deg)
        out.append(f'<line x1="{_f(cx)}" y1="{_f(cy)}" x2="{_f(x)}" y2="{_f(y)}"/>')
    out.append("</g>")
    out.append('<g id="points" stroke="none">')
    for r in sorted(recs, key=lambda r: (r.alpha, r.beta)):
        x, y = xy(r.alpha, math.degrees(r.beta))
        color = RECOVERED_COLOR if r.recovered else FAILED_COLOR
        out.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="3" fill="{color}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
