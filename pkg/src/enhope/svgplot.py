"""Dependency-free SVG scatter plots of embedding CSVs.

Points get one fill color per class from a fixed 12-color palette; classes
beyond 12 cycle the palette with a different marker shape. Exemplars are
drawn last as red ring markers so they sit above the point cloud.
"""

from __future__ import annotations

import csv

import numpy as np

PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
]
MARKERS = ["circle", "square", "triangle"]
RING_COLOR = "#d62728"


def read_embedding_csv(path: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a (y1..yh, label, is_exemplar) CSV written by the embed command."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    header = rows[0]
    if len(header) < 3 or header[-1] != "is_exemplar" or header[-2] != "label":
        raise ValueError(f"{path}: expected columns y1..yh,label,is_exemplar")
    try:
        body = np.array([[float(v) for v in row] for row in rows[1:]])
    except ValueError as exc:
        raise ValueError(f"{path}: malformed embedding CSV: {exc}") from None
    if body.shape[1] != len(header):
        raise ValueError(f"{path}: ragged embedding CSV")
    return body[:, :-2], body[:, -2].astype(np.int64), body[:, -1].astype(bool)


def _marker(shape: str, x: float, y: float, r: float, fill: str) -> str:
    if shape == "square":
        return (f'<rect x="{x - r:.2f}" y="{y - r:.2f}" width="{2 * r:.2f}" '
                f'height="{2 * r:.2f}" fill="{fill}"/>')
    if shape == "triangle":
        pts = f"{x:.2f},{y - r:.2f} {x - r:.2f},{y + r:.2f} {x + r:.2f},{y + r:.2f}"
        return f'<polygon points="{pts}" fill="{fill}"/>'
    return f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r:.2f}" fill="{fill}"/>'


def render_scatter(Y: np.ndarray, labels: np.ndarray, is_exemplar: np.ndarray,
                   size: int = 800, point_radius: float = 2.5) -> str:
    """Render the first two embedding coordinates as an SVG document string."""
    Y = np.asarray(Y, dtype=np.float64)[:, :2]
    margin = 40.0
    lo = Y.min(axis=0)
    hi = Y.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)

    def to_px(p: np.ndarray) -> tuple[float, float]:
        sx = margin + (p[0] - lo[0]) / span[0] * (size - 2 * margin)
        sy = size - margin - (p[1] - lo[1]) / span[1] * (size - 2 * margin)
        return sx, sy

    classes = sorted(int(c) for c in np.unique(labels))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
           f'height="{size}" viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>']
    for c in classes:
        fill = PALETTE[c % len(PALETTE)]
        shape = MARKERS[(c // len(PALETTE)) % len(MARKERS)]
        sel = (labels == c) & ~is_exemplar
        for p in Y[sel]:
            x, y = to_px(p)
            out.append(_marker(shape, x, y, point_radius, fill))
    for p in Y[is_exemplar]:
        x, y = to_px(p)
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{2.5 * point_radius:.2f}" '
                   f'fill="none" stroke="{RING_COLOR}" stroke-width="2"/>')
    for row, c in enumerate(classes):
        fill = PALETTE[c % len(PALETTE)]
        shape = MARKERS[(c // len(PALETTE)) % len(MARKERS)]
        lx, ly = size - margin - 60.0, margin + 16.0 * row
        out.append(f'<g class="legend-entry">{_marker(shape, lx, ly, 4.0, fill)}'
                   f'<text x="{lx + 10.0:.2f}" y="{ly + 4.0:.2f}" '
                   f'font-size="12">class {c}</text></g>')
    out.append("</svg>")
    return "\n".join(out)


def plot_csv(csv_path: str, svg_path: str, size: int = 800) -> None:
    Y, labels, is_exemplar = read_embedding_csv(csv_path)
    svg = render_scatter(Y, labels, is_exemplar, size=size)
    with open(svg_path, "w") as f:
        f.write(svg)
