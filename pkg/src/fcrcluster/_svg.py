"""Minimal hand-rolled SVG line charts (no plotting dependency)."""

from __future__ import annotations

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")

_PANEL_W = 380
_PANEL_H = 300
_MARGIN = 52


def _scale(values, lo, hi, out_lo, out_hi):
    span = hi - lo or 1.0
    return [out_lo + (v - lo) / span * (out_hi - out_lo) for v in values]


def _panel(x, series, title, ylabel, x0, ref_y=None, ref_diag=False):
    """One panel of polylines; returns a list of SVG fragments."""
    xs = list(x)
    all_y = [v for ys in series.values() for v in ys if v == v]
    if ref_y is not None:
        all_y.append(ref_y)
    y_lo = 0.0
    y_hi = max(all_y) * 1.15 if all_y else 1.0
    x_lo, x_hi = min(xs), max(xs)
    left, right = x0 + _MARGIN, x0 + _PANEL_W - 12
    top, bottom = 34, _PANEL_H - 40

    def sx(vals):
        return _scale(vals, x_lo, x_hi, left, right)

    def sy(vals):
        return _scale(vals, y_lo, y_hi, bottom, top)

    parts = [
        f'<text x="{x0 + _PANEL_W / 2:.1f}" y="18" text-anchor="middle" '
        f'font-size="13">{title}</text>',
        f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" '
        'fill="none" stroke="#444" stroke-width="1"/>',
        f'<text x="{x0 + 14}" y="{(top + bottom) / 2:.1f}" font-size="11" '
        f'transform="rotate(-90 {x0 + 14} {(top + bottom) / 2:.1f})" '
        f'text-anchor="middle">{ylabel}</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv = x_lo + frac * (x_hi - x_lo)
        yv = y_lo + frac * (y_hi - y_lo)
        px = sx([xv])[0]
        py = sy([yv])[0]
        parts.append(
            f'<text x="{px:.1f}" y="{bottom + 16}" font-size="10" '
            f'text-anchor="middle">{xv:g}</text>'
        )
        parts.append(
            f'<text x="{left - 6}" y="{py + 3:.1f}" font-size="10" '
            f'text-anchor="end">{yv:.3g}</text>'
        )
    if ref_y is not None:
        py = sy([ref_y])[0]
        parts.append(
            f'<line class="ref-alpha" x1="{left}" y1="{py:.2f}" x2="{right}" '
            f'y2="{py:.2f}" stroke="#222" stroke-dasharray="5,4" stroke-width="1"/>'
        )
    if ref_diag:
        pxs = sx([x_lo, x_hi])
        pys = sy([x_lo, x_hi])
        parts.append(
            f'<line class="ref-alpha" x1="{pxs[0]:.2f}" y1="{pys[0]:.2f}" '
            f'x2="{pxs[1]:.2f}" y2="{pys[1]:.2f}" stroke="#222" '
            'stroke-dasharray="5,4" stroke-width="1"/>'
        )
    for k, (name, ys) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(
            f"{px:.2f},{py:.2f}" for px, py in zip(sx(xs), sy(ys)) if py == py
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"/>'
        )
        ly = top + 14 + 13 * k
        parts.append(
            f'<line x1="{right - 96}" y1="{ly - 4}" x2="{right - 80}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{right - 76}" y="{ly}" font-size="10">{name}</text>')
    return parts


def sweep_chart(
    x,
    fcr_series: dict[str, list[float]],
    sel_series: dict[str, list[float]],
    xlabel: str,
    alpha: float | None,
    alpha_is_x: bool,
    title: str,
) -> str:
    """Two-panel chart: FCR with a reference line at alpha, then selection."""
    width = 2 * _PANEL_W
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{_PANEL_H}" viewBox="0 0 {width} {_PANEL_H}">',
        f'<title>{title}</title>',
    ]
    parts += _panel(
        x,
        fcr_series,
        f"FCR vs {xlabel}",
        "FCR",
        0,
        ref_y=None if alpha_is_x else alpha,
        ref_diag=alpha_is_x,
    )
    parts += _panel(
        x, sel_series, f"selection frequency vs {xlabel}", "selection frequency", _PANEL_W
    )
    parts.append(
        f'<text x="{width / 2:.1f}" y="{_PANEL_H - 8}" text-anchor="middle" '
        f'font-size="11">{xlabel}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
