"""Self-contained SVG emission for density sweep results.

No plotting dependency: the harness needs deterministic, parseable output
(one panel per method, one polyline per topology/regime series), so the SVG
document is assembled directly.  Colors follow the usual convention for the
three topologies (ER blue, BA red, WS green); the isotropic regime draws
solid lines and the anisotropic regime dashed ones.
"""

from __future__ import annotations

import math

from .errors import InsufficientData
from .metrics import MetricsReport

PANEL_W, PANEL_H = 360, 250
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 52, 16, 30, 40
PANELS_PER_ROW = 2

TOPOLOGY_COLORS = {"ER": "#1f77b4", "BA": "#d62728", "WS": "#2ca02c"}
REGIME_DASH = {"isotropic": "none", "anisotropic": "7,4"}
_FALLBACK_COLORS = ["#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]


def _series(rows: list[MetricsReport], metric: str):
    """-> {method: {(topology, regime): [(density, mean), ...]}}"""
    acc: dict = {}
    for row in rows:
        val = getattr(row, metric)
        if row.failed or val != val:
            continue
        key = (row.method, row.topology, row.regime, row.achieved_density)
        acc.setdefault(key, []).append(val)
    out: dict = {}
    for (method, topo, regime, dens), vals in acc.items():
        out.setdefault(method, {}).setdefault((topo, regime), []).append(
            (dens, sum(vals) / len(vals))
        )
    for method in out:
        for series in out[method].values():
            series.sort()
    return out


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def emit_density_plot(rows: list[MetricsReport], metric: str) -> str:
    """One panel per method: x = achieved density, y = mean ``metric``.

    Raises InsufficientData when fewer than two densities carry usable
    values for the metric.
    """
    if metric not in ("selectivity", "alignment", "r2_global"):
        raise ValueError(f"unsupported plot metric {metric!r}")
    per_method = _series(rows, metric)
    densities = {
        d for series in per_method.values() for pts in series.values() for d, _ in pts
    }
    if len(densities) < 2:
        raise InsufficientData(
            f"need >= 2 densities with finite '{metric}' values, got {len(densities)}"
        )

    values = [y for s in per_method.values() for pts in s.values() for _, y in pts]
    x_lo, x_hi = min(densities), max(densities)
    y_lo, y_hi = min(values), max(values)
    if math.isclose(y_lo, y_hi):
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    methods = sorted(per_method)
    n_rows = (len(methods) + PANELS_PER_ROW - 1) // PANELS_PER_ROW
    width = PANELS_PER_ROW * PANEL_W if len(methods) > 1 else PANEL_W
    height = n_rows * PANEL_H + 30  # room for the shared legend

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for idx, method in enumerate(methods):
        ox = (idx % PANELS_PER_ROW) * PANEL_W
        oy = (idx // PANELS_PER_ROW) * PANEL_H
        parts.append(
            _panel(per_method[method], method, metric, ox, oy, x_lo, x_hi, y_lo, y_hi)
        )
    parts.append(_legend(per_method, 10, n_rows * PANEL_H + 8))
    parts.append("</svg>")
    return "\n".join(parts)


def _panel(series, method, metric, ox, oy, x_lo, x_hi, y_lo, y_hi) -> str:
    x0, x1 = ox + MARGIN_L, ox + PANEL_W - MARGIN_R
    y0, y1 = oy + MARGIN_T, oy + PANEL_H - MARGIN_B

    def sx(x):
        return x0 + (x - x_lo) / (x_hi - x_lo) * (x1 - x0)

    def sy(y):
        return y1 - (y - y_lo) / (y_hi - y_lo) * (y1 - y0)

    out = [f'<g data-panel="{method}">']
    out.append(
        f'<text x="{(x0 + x1) / 2:.1f}" y="{oy + 18}" text-anchor="middle" '
        f'font-weight="bold">{method}</text>'
    )
    out.append(
        f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" '
        f'fill="none" stroke="#444"/>'
    )
    for t in _ticks(x_lo, x_hi):
        px = sx(t)
        out.append(f'<line x1="{px:.1f}" y1="{y1}" x2="{px:.1f}" y2="{y1 + 4}" stroke="#444"/>')
        out.append(
            f'<text x="{px:.1f}" y="{y1 + 16}" text-anchor="middle">{t:.2f}</text>'
        )
    for t in _ticks(y_lo, y_hi):
        py = sy(t)
        out.append(f'<line x1="{x0 - 4}" y1="{py:.1f}" x2="{x0}" y2="{py:.1f}" stroke="#444"/>')
        out.append(
            f'<text x="{x0 - 6}" y="{py + 3:.1f}" text-anchor="end">{t:.2f}</text>'
        )
    out.append(
        f'<text x="{(x0 + x1) / 2:.1f}" y="{oy + PANEL_H - 8}" text-anchor="middle">'
        "edge density</text>"
    )
    out.append(
        f'<text x="{ox + 12}" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 {ox + 12} {(y0 + y1) / 2:.1f})">{metric}</text>'
    )
    for (topo, regime) in sorted(series):
        pts = series[(topo, regime)]
        color = TOPOLOGY_COLORS.get(topo, _FALLBACK_COLORS[hash(topo) % 4])
        dash = REGIME_DASH.get(regime, "2,2")
        coords = " ".join(f"{sx(d):.2f},{sy(v):.2f}" for d, v in pts)
        dash_attr = "" if dash == "none" else f' stroke-dasharray="{dash}"'
        out.append(
            f'<polyline data-series="{topo}/{regime}" points="{coords}" fill="none" '
            f'stroke="{color}" stroke-width="1.6"{dash_attr}/>'
        )
        for d, v in pts:
            out.append(
                f'<circle cx="{sx(d):.2f}" cy="{sy(v):.2f}" r="2.2" fill="{color}"/>'
            )
    out.append("</g>")
    return "\n".join(out)


def _legend(per_method, x, y) -> str:
    topos = sorted({t for s in per_method.values() for (t, _) in s})
    regimes = sorted({r for s in per_method.values() for (_, r) in s})
    out = ['<g data-legend="1">']
    cx = x
    for topo in topos:
        color = TOPOLOGY_COLORS.get(topo, "#7f7f7f")
        out.append(f'<line x1="{cx}" y1="{y}" x2="{cx + 22}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{cx + 26}" y="{y + 4}">{topo}</text>')
        cx += 70
    for regime in regimes:
        dash = REGIME_DASH.get(regime, "2,2")
        dash_attr = "" if dash == "none" else f' stroke-dasharray="{dash}"'
        out.append(
            f'<line x1="{cx}" y1="{y}" x2="{cx + 22}" y2="{y}" stroke="#333" '
            f'stroke-width="2"{dash_attr}/>'
        )
        out.append(f'<text x="{cx + 26}" y="{y + 4}">{regime}</text>')
        cx += 100
    out.append("</g>")
    return "\n".join(out)
