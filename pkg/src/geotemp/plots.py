"""Minimal deterministic SVG rendering of the CSV exports.

Three layouts: ``surface`` (lat, lon, loss[, dlat, dlon]) as a heatmap with
the extremal cells annotated, ``matrix`` (label column plus numeric columns)
as a heatmap, and ``line`` (x, y[, ...]) as polylines.
"""

from __future__ import annotations

import csv
import io
import math
from xml.sax.saxutils import escape

_W, _H, _PAD = 720, 400, 40


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def _gray(t: float) -> str:
    v = int(round(255 * min(max(t, 0.0), 1.0)))
    return f"#{v:02x}{v:02x}{v:02x}"


def _svg(body: list[str], title: str) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H + 2 * _PAD}" '
            f'viewBox="0 0 {_W} {_H + 2 * _PAD}">')
    return "\n".join([head, f'<title>{escape(title)}</title>',
                      f'<rect width="{_W}" height="{_H + 2 * _PAD}" fill="white"/>', *body, "</svg>"]) + "\n"


def detect_kind(header: list[str]) -> str:
    if header[:3] == ["lat", "lon", "loss"]:
        return "surface"
    if len(header) > 3:
        return "matrix"
    return "line"


def render_surface(rows: list[list[str]], title: str) -> tuple[str, dict]:
    """Heatmap, darker is lower; north at the top."""
    lats = sorted({float(r[0]) for r in rows}, reverse=True)
    lons = sorted({float(r[1]) for r in rows})
    loss = [float(r[2]) for r in rows]
    lo, hi = min(loss), max(loss)
    span = hi - lo or 1.0
    cw, ch = (_W - 2 * _PAD) / len(lons), _H / len(lats)
    li = {v: i for i, v in enumerate(lats)}
    lj = {v: j for j, v in enumerate(lons)}
    body = ['<g id="cells">']
    for r, v in zip(rows, loss):
        x = _PAD + lj[float(r[1])] * cw
        y = _PAD + li[float(r[0])] * ch
        body.append(f'<rect x="{x:.3f}" y="{y:.3f}" width="{cw:.3f}" height="{ch:.3f}" fill="{_gray((v - lo) / span)}"/>')
    body.append("</g>")
    has_grad = len(rows[0]) >= 5 and rows[0][3] != ""
    if has_grad:
        body.append('<g id="gradients" stroke="red" stroke-width="1">')
        step = max(1, len(lons) // 24)
        gmax = max(math.hypot(float(r[3]), float(r[4])) for r in rows) or 1.0
        for r in rows:
            i, j = li[float(r[0])], lj[float(r[1])]
            if i % step or j % step:
                continue
            cx, cy = _PAD + (j + 0.5) * cw, _PAD + (i + 0.5) * ch
            scale = 0.9 * step * min(cw, ch) / gmax
            dx, dy = float(r[4]) * scale, -float(r[3]) * scale
            body.append(f'<line x1="{cx:.2f}" y1="{cy:.2f}" x2="{cx + dx:.2f}" y2="{cy + dy:.2f}"/>')
        body.append("</g>")
    info = {}
    for name, k, color in (("argmin", loss.index(lo), "blue"), ("argmax", loss.index(hi), "orange")):
        r = rows[k]
        cx = _PAD + (lj[float(r[1])] + 0.5) * cw
        cy = _PAD + (li[float(r[0])] + 0.5) * ch
        body.append(
            f'<g id="{name}" data-lat="{r[0]}" data-lon="{r[1]}" data-loss="{r[2]}">'
            f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="5" fill="none" stroke="{color}" stroke-width="2"/>'
            f'<text x="{cx + 7:.2f}" y="{cy - 7:.2f}" font-size="11" fill="{color}">{name} '
            f'({_fmt(float(r[0]))}, {_fmt(float(r[1]))})</text></g>'
        )
        info[name] = {"lat": float(r[0]), "lon": float(r[1]), "loss": float(r[2])}
    body.append(f'<text x="{_PAD}" y="{_PAD - 12}" font-size="13">{escape(title)}: loss '
                f'{_fmt(lo)} to {_fmt(hi)}, darker is lower</text>')
    return _svg(body, title), info


def render_matrix(header: list[str], rows: list[list[str]], title: str) -> tuple[str, dict]:
    vals = [[float(x) for x in r[1:]] for r in rows]
    flat = [v for row in vals for v in row]
    lo, hi = min(flat), max(flat)
    span = hi - lo or 1.0
    n_r, n_c = len(vals), len(vals[0])
    cw, ch = (_W - 2 * _PAD) / n_c, _H / n_r
    body = ['<g id="cells">']
    for i, row in enumerate(vals):
        for j, v in enumerate(row):
            body.append(f'<rect x="{_PAD + j * cw:.3f}" y="{_PAD + i * ch:.3f}" width="{cw:.3f}" '
                        f'height="{ch:.3f}" fill="{_gray((v - lo) / span)}"/>')
    body.append("</g>")
    body.append(f'<text x="{_PAD}" y="{_PAD - 12}" font-size="13">{escape(title)}: {n_r} x {n_c}, '
                f'{_fmt(lo)} (black) to {_fmt(hi)} (white)</text>')
    return _svg(body, title), {"rows": n_r, "cols": n_c, "min": lo, "max": hi}


def render_line(header: list[str], rows: list[list[str]], title: str) -> tuple[str, dict]:
    xs = [float(r[0]) for r in rows]
    series = [[float(r[k]) for r in rows] for k in range(1, len(header))]
    x0, x1 = min(xs), max(xs)
    ys = [v for s in series for v in s]
    y0, y1 = min(ys), max(ys)
    sx = (_W - 2 * _PAD) / ((x1 - x0) or 1.0)
    sy = _H / ((y1 - y0) or 1.0)
    colors = ("black", "red", "blue", "green", "purple")
    body = [f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H}" fill="none" stroke="#888"/>']
    for k, s in enumerate(series):
        pts = " ".join(f"{_PAD + (x - x0) * sx:.2f},{_PAD + _H - (y - y0) * sy:.2f}" for x, y in zip(xs, s))
        body.append(f'<polyline id="{escape(header[k + 1])}" points="{pts}" fill="none" '
                    f'stroke="{colors[k % len(colors)]}" stroke-width="1.5"/>')
    body.append(f'<text x="{_PAD}" y="{_PAD - 12}" font-size="13">{escape(title)}: {escape(header[0])} '
                f'{_fmt(x0)} to {_fmt(x1)}, {escape(", ".join(header[1:]))} {_fmt(y0)} to {_fmt(y1)}</text>')
    return _svg(body, title), {"points": len(xs), "series": len(series)}


def render_csv(text: str, kind: str = "auto", title: str = "") -> tuple[str, dict]:
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) < 2:
        raise ValueError("CSV has no data rows")
    header, rows = rows[0], rows[1:]
    kind = detect_kind(header) if kind == "auto" else kind
    if kind == "surface":
        svg, info = render_surface(rows, title)
    elif kind == "matrix":
        svg, info = render_matrix(header, rows, title)
    elif kind == "line":
        svg, info = render_line(header, rows, title)
    else:
        raise ValueError(f"unknown render kind {kind!r}")
    return svg, {"kind": kind, **info}
