"""CSV tables and dependency-free SVG line plots."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape


@dataclass
class Table:
    columns: list[str]
    rows: list[tuple] = field(default_factory=list)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def append(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values for {len(self.columns)} columns")
        self.rows.append(tuple(values))

    def __len__(self) -> int:
        return len(self.rows)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def emit_csv(table: Table, path) -> Path:
    """Write ``table`` with a header row, 17 significant digits and ``\\n`` line ends."""
    if not table.rows:
        raise ValueError("refusing to write an empty table")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([_fmt(v) for v in row])
    return path


def emit_svg(series: dict[str, tuple[Sequence[float], Sequence[float]]], path,
             xlabel: str = "x", ylabel: str = "y", title: str = "",
             logx: bool = False, logy: bool = False,
             width: int = 640, height: int = 420) -> Path:
    """Static line plot of named ``(x, y)`` series with labelled axes."""
    if not series or not any(len(x) for x, _ in series.values()):
        raise ValueError("refusing to plot empty data")
    tx = (lambda v: math.log10(v)) if logx else float
    ty = (lambda v: math.log10(v)) if logy else float
    pts = {
        name: [(tx(a), ty(b)) for a, b in zip(x, y)
               if math.isfinite(float(a)) and math.isfinite(float(b))
               and (not logx or a > 0) and (not logy or b > 0)]
        for name, (x, y) in series.items()
    }
    allx = [p[0] for v in pts.values() for p in v]
    ally = [p[1] for v in pts.values() for p in v]
    if not allx:
        raise ValueError("no finite points to plot")
    x0, x1 = min(allx), max(allx)
    y0, y1 = min(ally), max(ally)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    ml, mr, mt, mb = 70, 20, 30, 50
    pw, ph = width - ml - mr, height - mt - mb

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for i in range(5):
        fx = x0 + (x1 - x0) * i / 4
        fy = y0 + (y1 - y0) * i / 4
        lx = f"1e{fx:.2g}" if logx else f"{fx:.3g}"
        ly = f"1e{fy:.2g}" if logy else f"{fy:.3g}"
        out.append(f'<text x="{sx(fx):.1f}" y="{mt + ph + 16}" font-size="11" '
                   f'text-anchor="middle">{escape(lx)}</text>')
        out.append(f'<text x="{ml - 6}" y="{sy(fy) + 4:.1f}" font-size="11" '
                   f'text-anchor="end">{escape(ly)}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 10}" font-size="13" '
               f'text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{ml + pw / 2}" y="20" font-size="14" '
                   f'text-anchor="middle">{escape(title)}</text>')
    for i, (name, p) in enumerate(pts.items()):
        color = colors[i % len(colors)]
        coords = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in p)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                   f'points="{coords}"/>')
        out.append(f'<text x="{ml + pw - 4}" y="{mt + 16 + 14 * i}" font-size="11" '
                   f'text-anchor="end" fill="{color}">{escape(name)}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path
