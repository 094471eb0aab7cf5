"""Report bundles: RFC-4180 CSV tables, sorted-key JSON, plain SVG line charts."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

SVG_WIDTH = 1000
SVG_HEIGHT = 600


@dataclass
class Table:
    header: list
    rows: list


@dataclass
class Series:
    label: str
    x: list
    y: list


@dataclass
class Plot:
    title: str
    xlabel: str
    ylabel: str
    series: list
    logx: bool = False
    logy: bool = False


@dataclass
class ReportBundle:
    command: str
    params: dict
    seed: int
    tables: dict = field(default_factory=dict)
    documents: dict = field(default_factory=dict)
    plots: dict = field(default_factory=dict)
    wall_time: float = 0.0


def format_number(x) -> str:
    """17 significant digits; integers and booleans stay as they are."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return "" if x is None else str(x)


def csv_text(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(table.header)
    for row in table.rows:
        writer.writerow([format_number(v) for v in row])
    return buf.getvalue()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        # JSON has no inf/nan; keep them readable
        return f if math.isfinite(f) else str(f)
    return obj


def json_text(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _ticks(lo, hi, log):
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        return [float(k) for k in range(a, b + 1)]
    span = hi - lo
    step = 10 ** math.floor(math.log10(span)) if span > 0 else 1.0
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= 8:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-12 * max(1.0, abs(hi)):
        out.append(t)
        t += step
    return out


def svg_text(plot: Plot) -> str:
    """Standalone 1000x600 line chart; log axes take base-10 logs of positive values."""
    left, right, top, bottom = 110, 30, 50, 80
    pw, ph = SVG_WIDTH - left - right, SVG_HEIGHT - top - bottom

    def tx(v, log):
        return math.log10(v) if log else v

    pts = []
    for s in plot.series:
        seq = []
        for x, y in zip(s.x, s.y):
            if x is None or y is None:
                continue
            x, y = float(x), float(y)
            if not (math.isfinite(x) and math.isfinite(y)):
                continue
            if (plot.logx and x <= 0) or (plot.logy and y <= 0):
                continue
            seq.append((tx(x, plot.logx), tx(y, plot.logy)))
        pts.append(seq)
    flat = [p for seq in pts for p in seq]
    if flat:
        x0, x1 = min(p[0] for p in flat), max(p[0] for p in flat)
        y0, y1 = min(p[1] for p in flat), max(p[1] for p in flat)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    def label(v, log):
        return ("1e%d" % round(v)) if log else ("%.4g" % v)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" width="{SVG_WIDTH}" height="{SVG_HEIGHT}">',
        f'<rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>',
        f'<text x="{SVG_WIDTH / 2:.1f}" y="30" text-anchor="middle" font-size="20">{_esc(plot.title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1, plot.logx):
        if x0 <= t <= x1:
            out.append(f'<line x1="{sx(t):.2f}" y1="{top + ph}" x2="{sx(t):.2f}" y2="{top + ph + 6}" stroke="black"/>')
            out.append(f'<text x="{sx(t):.2f}" y="{top + ph + 24}" text-anchor="middle" font-size="14">{label(t, plot.logx)}</text>')
    for t in _ticks(y0, y1, plot.logy):
        if y0 <= t <= y1:
            out.append(f'<line x1="{left - 6}" y1="{sy(t):.2f}" x2="{left}" y2="{sy(t):.2f}" stroke="black"/>')
            out.append(f'<text x="{left - 10}" y="{sy(t) + 5:.2f}" text-anchor="end" font-size="14">{label(t, plot.logy)}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{SVG_HEIGHT - 20}" text-anchor="middle" font-size="16">{_esc(plot.xlabel)}</text>')
    out.append(
        f'<text x="25" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="16" '
        f'transform="rotate(-90 25 {top + ph / 2:.1f})">{_esc(plot.ylabel)}</text>'
    )
    for k, (s, seq) in enumerate(zip(plot.series, pts)):
        c = colors[k % len(colors)]
        if seq:
            path = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in seq)
            out.append(f'<polyline fill="none" stroke="{c}" stroke-width="2" points="{path}"/>')
            for a, b in seq:
                out.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="3" fill="{c}"/>')
        ly = top + 20 + 20 * k
        out.append(f'<line x1="{left + pw - 180}" y1="{ly}" x2="{left + pw - 150}" y2="{ly}" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 140}" y="{ly + 5}" font-size="14">{_esc(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def versions() -> dict:
    import platform

    import numba
    import scipy

    from . import __version__
    from ._jit import backend_name

    return {
        "aniso_acf": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "python": platform.python_version(),
        "backend": backend_name(),
    }


def emit_bundle(bundle: ReportBundle, output_dir: str, formats=("csv", "json", "svg")) -> list:
    """Write the bundle and then ``manifest.json`` listing every file with its sha256.

    Files are written in sorted name order. On an ``OSError`` every file
    written so far is removed and the error re-raised.
    """
    formats = set(formats)
    payloads = {}
    if "csv" in formats:
        for name, table in bundle.tables.items():
            payloads[f"{name}.csv"] = csv_text(table)
    if "json" in formats:
        for name, doc in bundle.documents.items():
            payloads[f"{name}.json"] = json_text(doc)
    if "svg" in formats:
        for name, plot in bundle.plots.items():
            payloads[f"{name}.svg"] = svg_text(plot)
    written = []
    try:
        os.makedirs(output_dir, exist_ok=True)
        entries = []
        for name in sorted(payloads):
            data = payloads[name].encode("utf-8")
            path = os.path.join(output_dir, name)
            with open(path, "wb") as fh:
                fh.write(data)
            written.append(path)
            entries.append({"file": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})
        manifest = {
            "command": bundle.command,
            "params": bundle.params,
            "seed": bundle.seed,
            "formats": sorted(formats),
            "files": entries,
            "versions": versions(),
            "wall_time_s": round(bundle.wall_time, 3),
        }
        path = os.path.join(output_dir, "manifest.json")
        with open(path, "wb") as fh:
            fh.write(json_text(manifest).encode("utf-8"))
        written.append(path)
    except OSError:
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        raise
    return written
