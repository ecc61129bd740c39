"""Minimal deterministic SVG rendering of Kaplan-Meier step curves.

Hand-rolled so the output is a pure function of the data: identical inputs
produce byte-identical files, which keeps plots diffable across reruns.
"""

from __future__ import annotations

import numpy as np

from coxkit.metrics import KaplanMeierCurve

WIDTH, HEIGHT = 720, 480
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 70, 24, 44, 56
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def _fmt(value: float) -> str:
    return f"{value:.2f}".rstrip("0").rstrip(".")


def _step_points(times, values, x_max: float):
    """Post-step polyline starting at (0, 1)."""
    xs, ys = [0.0], [1.0]
    prev = 1.0
    for t, v in zip(times, values):
        xs.extend([float(t), float(t)])
        ys.extend([prev, float(v)])
        prev = float(v)
    xs.append(x_max)
    ys.append(prev)
    return xs, ys


def _band_points(curve: KaplanMeierCurve, x_max: float):
    ux, uy = _step_points(curve.event_times, curve.ci_upper, x_max)
    lx, ly = _step_points(curve.event_times, curve.ci_lower, x_max)
    return ux + lx[::-1], uy + ly[::-1]


def render_km_svg(
    curves: list[tuple[str, KaplanMeierCurve]],
    title: str = "Kaplan-Meier survival",
    p_value: float | None = None,
    show_bands: bool = True,
) -> str:
    """SVG document with one step curve (and optional confidence band) per label."""
    if not curves:
        raise ValueError("need at least one curve")
    x_max = max(
        [float(c.event_times[-1]) if c.event_times.size else 1.0 for _, c in curves]
    )
    x_max *= 1.02
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def px(x):
        return MARGIN_LEFT + plot_w * (x / x_max)

    def py(y):
        return MARGIN_TOP + plot_h * (1.0 - y)

    def path(xs, ys, close=False):
        parts = [f"{'M' if i == 0 else 'L'}{_fmt(px(x))},{_fmt(py(y))}" for i, (x, y) in enumerate(zip(xs, ys))]
        return " ".join(parts) + (" Z" if close else "")

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{title}</text>',
    ]

    # axes
    out.append(
        f'<line x1="{MARGIN_LEFT}" y1="{py(0)}" x2="{px(x_max)}" y2="{py(0)}" '
        'stroke="black" stroke-width="1"/>'
    )
    out.append(
        f'<line x1="{MARGIN_LEFT}" y1="{py(0)}" x2="{MARGIN_LEFT}" y2="{py(1)}" '
        'stroke="black" stroke-width="1"/>'
    )
    for frac in np.linspace(0.0, 1.0, 6):
        y = py(frac)
        out.append(
            f'<line x1="{MARGIN_LEFT - 4}" y1="{_fmt(y)}" x2="{MARGIN_LEFT}" '
            f'y2="{_fmt(y)}" stroke="black" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{MARGIN_LEFT - 8}" y="{_fmt(y + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{frac:.1f}</text>'
        )
        x_tick = frac * x_max
        out.append(
            f'<line x1="{_fmt(px(x_tick))}" y1="{py(0)}" x2="{_fmt(px(x_tick))}" '
            f'y2="{py(0) + 4}" stroke="black" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{_fmt(px(x_tick))}" y="{py(0) + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{x_tick:.3g}</text>'
        )
    out.append(
        f'<text x="{MARGIN_LEFT + plot_w // 2}" y="{HEIGHT - 12}" text-anchor="middle" '
        'font-family="sans-serif" font-size="13">time</text>'
    )
    out.append(
        f'<text x="16" y="{MARGIN_TOP + plot_h // 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 16 {MARGIN_TOP + plot_h // 2})">survival probability</text>'
    )

    for idx, (label, curve) in enumerate(curves):
        color = COLORS[idx % len(COLORS)]
        if show_bands and curve.event_times.size:
            bx, by = _band_points(curve, x_max)
            out.append(
                f'<path d="{path(bx, by, close=True)}" fill="{color}" '
                'fill-opacity="0.15" stroke="none"/>'
            )
        xs, ys = _step_points(curve.event_times, curve.survival, x_max)
        out.append(
            f'<path d="{path(xs, ys)}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        ly = MARGIN_TOP + 14 + 18 * idx
        lx = WIDTH - MARGIN_RIGHT - 170
        out.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 24}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{lx + 30}" y="{ly}" font-family="sans-serif" '
            f'font-size="12">{label}</text>'
        )

    if p_value is not None:
        out.append(
            f'<text x="{MARGIN_LEFT + 10}" y="{MARGIN_TOP + 16}" '
            f'font-family="sans-serif" font-size="12">log-rank p = {p_value:.3g}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
