"""Dependency-free SVG line plots and tidy CSV export for logs and reports."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from footlift.errors import FormatError

WIDTH, HEIGHT = 480, 240
MARGIN = 40
COLORS = ("#1b6ca8", "#d1495b", "#66a182", "#edae49", "#6a4c93", "#00798c")


def read_series_csv(path) -> dict[str, list[tuple[float, float]]]:
    """Series keyed by column name, x taken from the first column (e.g. epoch)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise FormatError(f"{path}: no data rows after the header")
    return {name: [(r[0], r[i]) for r in rows] for i, name in enumerate(header) if i}


def read_report_traces(path) -> dict[str, list[tuple[float, float]]]:
    """Per-frame AJAE traces from an evaluation report JSON."""
    try:
        report = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    seqs = report.get("sequences") or [report]
    out = {}
    for seq in seqs:
        trace = seq.get("ajae_trace") or []
        if trace:
            out[f"ajae_{seq.get('name', len(out))}"] = [(float(i), float(v)) for i, v in enumerate(trace)]
    if not out:
        raise FormatError(f"{path}: report has no per-frame AJAE traces")
    return out


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def polyline_path(points: list[tuple[float, float]], box) -> str:
    """SVG path data ``M x,y L x,y ...`` mapping data into ``box = (x0, y0, x1, y1)``."""
    x0, y0, x1, y1 = box
    pts = [(x, y) for x, y in points if math.isfinite(y)]
    if not pts:
        return ""
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    xlo, xhi = min(xs), max(xs)
    ylo, yhi = min(ys), max(ys)
    xspan = (xhi - xlo) or 1.0
    yspan = (yhi - ylo) or 1.0
    cmds = []
    for i, (x, y) in enumerate(pts):
        px = x0 + (x - xlo) / xspan * (x1 - x0)
        py = y1 - (y - ylo) / yspan * (y1 - y0)
        cmds.append(f"{'M' if i == 0 else 'L'}{_fmt(px)},{_fmt(py)}")
    return " ".join(cmds)


def render_svg(series: dict[str, list[tuple[float, float]]]) -> str:
    """One stacked panel per series, each scaled to its own range."""
    names = sorted(series)
    total_h = HEIGHT * len(names)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{total_h}" '
             f'viewBox="0 0 {WIDTH} {total_h}">']
    for k, name in enumerate(names):
        top = k * HEIGHT
        box = (MARGIN, top + MARGIN / 2, WIDTH - MARGIN / 2, top + HEIGHT - MARGIN)
        ys = [y for _, y in series[name] if math.isfinite(y)]
        lo, hi = (min(ys), max(ys)) if ys else (math.nan, math.nan)
        parts.append(f'<g id="{name}">')
        parts.append(f'<rect x="{_fmt(box[0])}" y="{_fmt(box[1])}" width="{_fmt(box[2] - box[0])}" '
                     f'height="{_fmt(box[3] - box[1])}" fill="none" stroke="#999"/>')
        parts.append(f'<text x="{MARGIN}" y="{_fmt(top + 14)}" font-size="12">{name} '
                     f'[{lo:.4g}, {hi:.4g}]</text>')
        d = polyline_path(series[name], box)
        if d:
            parts.append(f'<path d="{d}" fill="none" stroke="{COLORS[k % len(COLORS)]}" stroke-width="1.5"/>')
        parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def tidy_csv(series: dict[str, list[tuple[float, float]]]) -> str:
    lines = ["series,x,y"]
    for name in sorted(series):
        lines.extend(f"{name},{x!r},{y!r}" for x, y in series[name])
    return "\n".join(lines) + "\n"


def plot_file(src, out) -> None:
    """Render ``src`` (training-log CSV or report JSON) to ``out`` (.svg or .csv)."""
    src, out = Path(src), Path(out)
    series = read_report_traces(src) if src.suffix == ".json" else read_series_csv(src)
    text = tidy_csv(series) if out.suffix == ".csv" else render_svg(series)
    out.write_text(text)
