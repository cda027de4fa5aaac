"""Minimal SVG line chart for ``step,success_rate[,phase]`` CSV files."""

from __future__ import annotations

import csv
from pathlib import Path
from xml.sax.saxutils import escape


def curve_svg(path: str | Path, width: int = 480, height: int = 300, pad: int = 40) -> str:
    with open(path, newline="") as fh:
        rows = [(int(r["step"]), float(r["success_rate"])) for r in csv.DictReader(fh)]
    x_max = max((s for s, _ in rows), default=1) or 1
    w, h = width - 2 * pad, height - 2 * pad

    def xy(step, rate):
        return pad + w * step / x_max, pad + h * (1.0 - rate)

    pts = " ".join(f"{x:.1f},{y:.1f}" for x, y in (xy(s, r) for s, r in rows))
    title = escape(Path(path).name)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
        f'  <text x="{pad}" y="{pad // 2}" font-size="12">{title}</text>\n'
        f'  <line x1="{pad}" y1="{pad + h}" x2="{pad + w}" y2="{pad + h}" stroke="black"/>\n'
        f'  <line x1="{pad}" y1="{pad}" x2="{pad}" y2="{pad + h}" stroke="black"/>\n'
        f'  <text x="{pad + w}" y="{pad + h + 16}" font-size="10" text-anchor="end">{x_max} steps</text>\n'
        f'  <text x="{pad - 4}" y="{pad + 4}" font-size="10" text-anchor="end">1.0</text>\n'
        f'  <text x="{pad - 4}" y="{pad + h}" font-size="10" text-anchor="end">0.0</text>\n'
        f'  <polyline fill="none" stroke="steelblue" stroke-width="2" points="{pts}"/>\n'
        "</svg>\n"
    )
