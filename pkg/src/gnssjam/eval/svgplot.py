"""Tiny deterministic SVG writer: line charts and annotated heatmaps."""

from html import escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"]


def _fmt(v):
    return f"{v:.2f}"


def _doc(width, height, body):
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n' + "\n".join(body) + "\n</svg>\n"
    )


def line_chart(x, series: dict, title="", xlabel="", ylabel="", width=520, height=340, dashed=()):
    left, right, top, bottom = 60, 130, 30, 45
    pw, ph = width - left - right, height - top - bottom
    x = np.asarray(x, dtype=float)
    ys = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    ys = ys[np.isfinite(ys)]
    y0, y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    x0, x1 = float(x.min()), float(x.max())
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + (1 - (v - y0) / (y1 - y0)) * ph

    body = [f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
            f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for k in range(5):
        yv = y0 + (y1 - y0) * k / 4
        body.append(f'<text x="{left - 6}" y="{_fmt(sy(yv) + 4)}" text-anchor="end">{yv:.3g}</text>')
    for xv in x:
        body.append(f'<text x="{_fmt(sx(xv))}" y="{top + ph + 15}" text-anchor="middle">{xv:g}</text>')
    body.append(f'<text x="{left + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    body.append(f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" '
                f'transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (name, ys_) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x, ys_) if np.isfinite(b))
        dash = ' stroke-dasharray="5,3"' if name in dashed else ""
        body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"{dash}/>')
        ly = top + 14 + 16 * i
        body.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 28}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>')
        body.append(f'<text x="{left + pw + 32}" y="{ly + 4}">{escape(str(name))}</text>')
    return _doc(width, height, body)


def heatmap(matrix, row_labels, col_labels, title="", vmin=None, vmax=None, cell=34, fmt="{:.1f}",
            xlabel="", ylabel=""):
    m = np.asarray(matrix, dtype=float)
    finite = m[np.isfinite(m)]
    lo = float(finite.min()) if vmin is None and finite.size else (vmin or 0.0)
    hi = float(finite.max()) if vmax is None and finite.size else (vmax if vmax is not None else 1.0)
    span = hi - lo if hi > lo else 1.0
    left, top = 60, 50
    width = left + cell * m.shape[1] + 20
    height = top + cell * m.shape[0] + 30
    body = [f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>']
    if xlabel:
        body.append(f'<text x="{left + cell * m.shape[1] / 2:.1f}" y="{height - 6}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        body.append(f'<text x="12" y="{top + cell * m.shape[0] / 2:.1f}" text-anchor="middle" '
                    f'transform="rotate(-90 12 {top + cell * m.shape[0] / 2:.1f})">{escape(ylabel)}</text>')
    for j, lab in enumerate(col_labels):
        body.append(f'<text x="{left + cell * j + cell / 2:.1f}" y="{top - 6}" text-anchor="middle">{escape(str(lab))}</text>')
    for i, lab in enumerate(row_labels):
        body.append(f'<text x="{left - 6}" y="{top + cell * i + cell / 2 + 4:.1f}" text-anchor="end">{escape(str(lab))}</text>')
        for j in range(m.shape[1]):
            v = m[i, j]
            if np.isfinite(v):
                t = min(max((v - lo) / span, 0.0), 1.0)
                shade = int(round(255 * (1 - t)))
                fill = f"rgb({shade},{shade},255)"
                text = fmt.format(v)
            else:
                fill, text = "#eeeeee", ""
            color = "white" if np.isfinite(v) and t > 0.6 else "black"
            x, y = left + cell * j, top + cell * i
            body.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="#999"/>')
            body.append(f'<text x="{x + cell / 2:.1f}" y="{y + cell / 2 + 4:.1f}" text-anchor="middle" '
                        f'font-size="9" fill="{color}">{text}</text>')
    return _doc(width, height, body)


def confusion_svg(cm, labels, title="confusion"):
    return heatmap(cm, labels, labels, title=title, fmt="{:.0f}", xlabel="predicted", ylabel="true")
