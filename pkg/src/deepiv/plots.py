"""Plot data tables and a minimal SVG line-chart renderer.

Each figure table is a tidy CSV with columns ``x, series, value`` where
``x`` is the sample size. Figures come in DGP pairs (odd number for
``dgp1``, even for ``dgp2``):

========  ===========================================
fig1/2    first-stage RMSE by estimator
fig3/4    first-stage RMSE of the DNN by ``(W, L)``
fig5/6    beta RMSE by estimator
fig7/8    beta RMSE of the DNN by ``(W, L)``
fig9/10   CI coverage of the DNN and the oracle
fig11/12  CI coverage of the DNN by ``(W, L)``
========  ===========================================
"""

from __future__ import annotations

import csv
import io
import math
from html import escape

_OFFSET = {"dgp1": 1, "dgp2": 2}
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf")


def _dnn_reference(cfg):
    grid = cfg.network_grid
    return (3, 10) if (3, 10) in grid else grid[0]


def _table(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("x", "series", "value"))
    for x, series, value in rows:
        w.writerow((x, series, "nan" if value is None or math.isnan(value) else repr(float(value))))
    return buf.getvalue()


def _by_estimator(result, metric, names):
    ref = _dnn_reference(result.config)
    rows = []
    for name in sorted(names):
        if name not in result.config.estimators:
            continue
        for n in result.config.sample_sizes:
            cell = result.cell(name, n, *ref) if name == "dnn" else result.cell(name, n)
            rows.append((n, name, cell[metric]))
    return rows


def _by_grid(result, metric):
    if "dnn" not in result.config.estimators:
        return []
    rows = []
    for L, W in sorted(result.config.network_grid, key=lambda t: (t[1], t[0])):
        for n in result.config.sample_sizes:
            rows.append((n, f"W={W},L={L}", result.cell("dnn", n, L, W)[metric]))
    return rows


def figure_tables(results) -> dict:
    """Map ``figN`` to CSV text for every figure the given results support."""
    tables = {}
    for res in sorted(results, key=lambda r: r.dgp):
        k = _OFFSET.get(res.dgp)
        if k is None:
            continue
        fs_names = [e for e in res.config.estimators if e not in ("ols", "oracle")]
        specs = (
            (k, _by_estimator(res, "fs_rmse", fs_names)),
            (k + 2, _by_grid(res, "fs_rmse")),
            (k + 4, _by_estimator(res, "beta_rmse", res.config.estimators)),
            (k + 6, _by_grid(res, "beta_rmse")),
            (k + 8, _by_estimator(res, "coverage", [e for e in ("dnn", "oracle") if e in res.config.estimators])),
            (k + 10, _by_grid(res, "coverage")),
        )
        for number, rows in specs:
            if rows:
                tables[f"fig{number}"] = _table(rows)
    return dict(sorted(tables.items(), key=lambda kv: int(kv[0][3:])))


def read_table(text: str):
    """Parse a figure CSV into ``{series: [(x, value), ...]}`` preserving first-seen order."""
    series = {}
    for row in csv.DictReader(io.StringIO(text)):
        series.setdefault(row["series"], []).append((float(row["x"]), float(row["value"])))
    return series


def render_svg(table_csv: str, title: str = "", width: int = 640, height: int = 400) -> str:
    """Polyline chart with a legend. Deterministic in its input text."""
    series = read_table(table_csv)
    pts = [(x, y) for s in series.values() for x, y in s if math.isfinite(y)]
    left, right, top, bottom = 60, 150, 30, 40
    pw, ph = width - left - right, height - top - bottom
    if pts:
        x_lo, x_hi = min(p[0] for p in pts), max(p[0] for p in pts)
        y_lo, y_hi = min(p[1] for p in pts), max(p[1] for p in pts)
    else:
        x_lo, x_hi, y_lo, y_hi = 0.0, 1.0, 0.0, 1.0
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5

    def sx(x):
        return left + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return top + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        f'<text x="{left}" y="{top - 10}" font-size="13">{escape(title)}</text>',
        f'<text x="{left}" y="{height - 8}">n</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        yv = y_lo + frac * (y_hi - y_lo)
        out.append(f'<text x="{left - 5}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    for xv in sorted({p[0] for p in pts}):
        out.append(f'<text x="{sx(xv):.1f}" y="{top + ph + 15}" text-anchor="middle">{xv:g}</text>')
    for i, (name, values) in enumerate(series.items()):
        colour = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in values if math.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{coords}"/>')
        ly = top + 12 + 16 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 30}" y2="{ly - 4}" '
                   f'stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 35}" y="{ly}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
