"""Deterministic artifact writers (JSON, CSV, SVG)."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return "%.17g" % x


def _emit(obj, out: list, indent: int, level: int) -> None:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = list(obj.items())
        for n, (k, v) in enumerate(items):
            out.append(pad + json.dumps(str(k)) + ": ")
            _emit(v, out, indent, level + 1)
            out.append(",\n" if n < len(items) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            out.append("[]")
            return
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            parts = []
            for v in seq:
                sub: list = []
                _emit(v, sub, indent, level + 1)
                parts.append("".join(sub))
            out.append("[" + ", ".join(parts) + "]")
            return
        out.append("[\n")
        for n, v in enumerate(seq):
            out.append(pad)
            _emit(v, out, indent, level + 1)
            out.append(",\n" if n < len(seq) - 1 else "\n")
        out.append(end + "]")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif obj is None:
        out.append("null")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 1) -> str:
    """JSON text with every float written to 17 significant digits."""
    out: list = []
    _emit(obj, out, indent, 0)
    return "".join(out) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    if v is None:
        return ""
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            if isinstance(r, dict):
                r = [r.get(h) for h in header]
            w.writerow([_cell(v) for v in r])
    return path


def write_jsonl(path, records) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for rec in records:
            fh.write(dumps(rec, indent=0).replace(",\n", ", ").replace("\n", "") + "\n")
    return path


def contour_rows(contours: dict):
    """Flatten {class: [polyline]} into (class, line, vertex, x, y) rows."""
    for c in sorted(contours):
        for li, line in enumerate(contours[c]):
            for vi, (x, y) in enumerate(line):
                yield (c, li, vi, float(x), float(y))


COLORS = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def write_svg(path, bbox, polygons: dict, contours: dict, scale: float = 60.0) -> Path:
    """Ground-truth polygons (filled, faint) with reconstructed contours on top."""
    x0, y0, x1, y1 = (float(v) for v in bbox)
    w, h = (x1 - x0) * scale, (y1 - y0) * scale

    def pts(P):
        return " ".join(f"{(x - x0) * scale:.2f},{(y1 - y) * scale:.2f}" for x, y in P)

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
             f'viewBox="0 0 {w:.0f} {h:.0f}">', f'<rect width="{w:.0f}" height="{h:.0f}" fill="white"/>']
    for c in sorted(polygons):
        col = COLORS[(c - 1) % len(COLORS)]
        for P in polygons[c]:
            lines.append(f'<polygon points="{pts(P)}" fill="{col}" fill-opacity="0.2" stroke="none"/>')
    for c in sorted(contours):
        col = COLORS[(c - 1) % len(COLORS)]
        for line in contours[c]:
            lines.append(f'<polyline points="{pts(line)}" fill="none" stroke="{col}" stroke-width="1.5"/>')
    lines.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path
