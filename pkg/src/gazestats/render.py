"""Deterministic SVG heatmaps and quiver plots of grid results.

Cells are drawn at their position in normalized image space (x/z, y/z; y down),
with edges halfway between neighbouring lattice positions. Invalid cells are
hatched, never interpolated. Output contains no timestamps or random ids, so
identical inputs give byte-identical files.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .directional import GridCellStats

PLOT = 560.0
MARGIN = 50.0
BAR_W = 18.0
WIDTH = MARGIN + PLOT + 30.0 + BAR_W + 70.0
HEIGHT = MARGIN + PLOT + 60.0

# viridis, sampled at 9 evenly spaced stops
_VIRIDIS = np.array(
    [
        [68, 1, 84],
        [71, 44, 122],
        [59, 81, 139],
        [44, 113, 142],
        [33, 144, 141],
        [39, 173, 129],
        [92, 200, 99],
        [170, 220, 50],
        [253, 231, 37],
    ],
    dtype=float,
)

HEATMAP_FIELDS = {
    "bias": ("bias_angle", "Bias (visual angle)"),
    "sigma_major": ("sigma_major_deg", "Spread along major axis"),
    "sigma_minor": ("sigma_minor_deg", "Spread along minor axis"),
    "mean_error": ("mean_sample_error_deg", "Mean sample error"),
}


def _n(x: float) -> str:
    return f"{x:.3f}"


def colormap(t: float) -> str:
    t = min(1.0, max(0.0, t))
    pos = t * (len(_VIRIDIS) - 1)
    i = min(int(pos), len(_VIRIDIS) - 2)
    c = _VIRIDIS[i] + (pos - i) * (_VIRIDIS[i + 1] - _VIRIDIS[i])
    r, g, b = (int(round(v)) for v in c)
    return f"#{r:02x}{g:02x}{b:02x}"


def _edges(centers: np.ndarray) -> np.ndarray:
    mids = 0.5 * (centers[1:] + centers[:-1])
    first = centers[0] - (mids[0] - centers[0]) if len(centers) > 1 else centers[0] - 0.05
    last = centers[-1] + (centers[-1] - mids[-1]) if len(centers) > 1 else centers[0] + 0.05
    return np.concatenate([[first], mids, [last]])


class _Layout:
    """Maps cells to rectangles in SVG user space."""

    def __init__(self, cells: Sequence[GridCellStats]):
        az = sorted({c.az_deg for c in cells})
        el = sorted({c.el_deg for c in cells})
        self.xc = np.tan(np.radians(az))
        self.yc = -np.tan(np.radians(el))[::-1]  # image y grows downward
        self.xe = _edges(self.xc)
        self.ye = _edges(self.yc)
        self.az_index = {a: i for i, a in enumerate(az)}
        self.el_index = {e: len(el) - 1 - i for i, e in enumerate(el)}
        lo = min(self.xe[0], self.ye[0])
        hi = max(self.xe[-1], self.ye[-1])
        self.lo, self.span = lo, hi - lo

    def sx(self, x: float) -> float:
        return MARGIN + (x - self.lo) / self.span * PLOT

    def sy(self, y: float) -> float:
        return MARGIN + (y - self.lo) / self.span * PLOT

    def rect(self, c: GridCellStats) -> tuple[float, float, float, float]:
        i, j = self.az_index[c.az_deg], self.el_index[c.el_deg]
        x0, x1 = self.sx(self.xe[i]), self.sx(self.xe[i + 1])
        y0, y1 = self.sy(self.ye[j]), self.sy(self.ye[j + 1])
        return x0, y0, x1 - x0, y1 - y0

    def center(self, c: GridCellStats) -> tuple[float, float]:
        i, j = self.az_index[c.az_deg], self.el_index[c.el_deg]
        return self.sx(self.xc[i]), self.sy(self.yc[j])


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_n(WIDTH)}" height="{_n(HEIGHT)}" '
        f'viewBox="0 0 {_n(WIDTH)} {_n(HEIGHT)}">',
        "<defs>",
        '<pattern id="hatch" patternUnits="userSpaceOnUse" width="6" height="6" patternTransform="rotate(45)">',
        '<rect width="6" height="6" fill="#d9d9d9"/>',
        '<line x1="0" y1="0" x2="0" y2="6" stroke="#8c8c8c" stroke-width="2"/>',
        "</pattern>",
        "</defs>",
        f'<rect width="{_n(WIDTH)}" height="{_n(HEIGHT)}" fill="#ffffff"/>',
        f'<text x="{_n(MARGIN)}" y="{_n(MARGIN - 20)}" font-family="sans-serif" font-size="15">{escape(title)}</text>',
    ]


def _frame(layout: _Layout) -> list[str]:
    x0, y0 = layout.sx(layout.lo), layout.sy(layout.lo)
    out = [
        f'<rect x="{_n(x0)}" y="{_n(y0)}" width="{_n(PLOT)}" height="{_n(PLOT)}" fill="none" stroke="#000000" stroke-width="1"/>',
        f'<text x="{_n(MARGIN + PLOT / 2)}" y="{_n(MARGIN + PLOT + 35)}" font-family="sans-serif" font-size="12" '
        'text-anchor="middle">normalized image x</text>',
    ]
    for v in (-1.0, 0.0, 1.0):
        if layout.lo <= v <= layout.lo + layout.span:
            out.append(
                f'<text x="{_n(layout.sx(v))}" y="{_n(MARGIN + PLOT + 16)}" font-family="sans-serif" font-size="11" '
                f'text-anchor="middle">{v:g}</text>'
            )
            out.append(
                f'<text x="{_n(MARGIN - 6)}" y="{_n(layout.sy(v) + 4)}" font-family="sans-serif" font-size="11" '
                f'text-anchor="end">{v:g}</text>'
            )
    return out


def _colorbar(vmin: float, vmax: float, unit: str = "deg") -> list[str]:
    x = MARGIN + PLOT + 30.0
    steps = 32
    h = PLOT / steps
    out = []
    for k in range(steps):
        t = 1.0 - (k + 0.5) / steps
        out.append(f'<rect x="{_n(x)}" y="{_n(MARGIN + k * h)}" width="{_n(BAR_W)}" height="{_n(h + 0.5)}" fill="{colormap(t)}"/>')
    out.append(
        f'<text class="scale-max" x="{_n(x + BAR_W + 4)}" y="{_n(MARGIN + 10)}" font-family="sans-serif" '
        f'font-size="11">max {vmax:.3f} {unit}</text>'
    )
    out.append(
        f'<text class="scale-min" x="{_n(x + BAR_W + 4)}" y="{_n(MARGIN + PLOT)}" font-family="sans-serif" '
        f'font-size="11">min {vmin:.3f} {unit}</text>'
    )
    return out


def _cell_attrs(c: GridCellStats) -> str:
    return f'data-az="{c.az_deg:g}" data-el="{c.el_deg:g}" data-n="{c.n_samples}"'


def _invalid_rect(layout: _Layout, c: GridCellStats) -> str:
    x, y, w, h = layout.rect(c)
    reason = escape(c.reason or "invalid")
    return (
        f'<rect class="invalid" {_cell_attrs(c)} data-reason="{reason}" x="{_n(x)}" y="{_n(y)}" '
        f'width="{_n(w)}" height="{_n(h)}" fill="url(#hatch)" stroke="#ffffff" stroke-width="0.5"/>'
    )


def _value_range(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        return 0.0, 1.0
    lo, hi = min(values), max(values)
    if hi - lo < 1e-12:
        hi = lo + 1e-12
    return lo, hi


def heatmap_svg(
    cells: Sequence[GridCellStats],
    value: Callable[[GridCellStats], float],
    title: str,
    axis: str | None = None,
) -> str:
    """Heatmap of ``value(cell)`` over valid cells; ``axis`` ("major"/"minor") overlays axis lines."""
    layout = _Layout(cells)
    vals = [value(c) for c in cells if c.valid and math.isfinite(value(c))]
    vmin, vmax = _value_range(vals)
    out = _header(title)
    out.append('<g class="cells">')
    for c in cells:
        v = value(c) if c.valid else math.nan
        if not math.isfinite(v):
            out.append(_invalid_rect(layout, c))
            continue
        x, y, w, h = layout.rect(c)
        out.append(
            f'<rect class="cell" {_cell_attrs(c)} data-value="{v:.6f}" x="{_n(x)}" y="{_n(y)}" '
            f'width="{_n(w)}" height="{_n(h)}" fill="{colormap((v - vmin) / (vmax - vmin))}"/>'
        )
    out.append("</g>")
    if axis is not None:
        color = "#1f4fd1" if axis == "major" else "#1a9e3a"
        out.append(f'<g class="axes-{axis}" stroke="{color}" stroke-width="1.6" stroke-linecap="round">')
        for c in cells:
            if not c.valid:
                continue
            vec = c.major_dir_image if axis == "major" else c.minor_dir_image
            if not np.all(np.isfinite(vec)):
                continue
            cx, cy = layout.center(c)
            _, _, w, h = layout.rect(c)
            half = 0.38 * min(w, h)
            out.append(
                f'<line x1="{_n(cx - half * vec[0])}" y1="{_n(cy - half * vec[1])}" '
                f'x2="{_n(cx + half * vec[0])}" y2="{_n(cy + half * vec[1])}"/>'
            )
        out.append("</g>")
    out += _frame(layout)
    out += _colorbar(vmin, vmax)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def quiver_svg(cells: Sequence[GridCellStats], title: str = "Bias direction") -> str:
    """Arrows from each cell's ground truth toward the fitted mean; length scales with bias."""
    layout = _Layout(cells)
    biases = [c.bias_angle for c in cells if c.valid and math.isfinite(c.bias_angle)]
    bmax = max(biases) if biases else 1.0
    bmax = bmax if bmax > 0 else 1.0
    out = _header(title)
    out.append('<g class="cells">')
    for c in cells:
        if not c.valid:
            out.append(_invalid_rect(layout, c))
    out.append("</g>")
    out.append('<g class="arrows" stroke="#000000" fill="#000000" stroke-width="1.2">')
    for c in cells:
        if not c.valid or not np.all(np.isfinite(c.bias_direction_image)):
            continue
        cx, cy = layout.center(c)
        _, _, w, h = layout.rect(c)
        length = 0.9 * min(w, h) * c.bias_angle / bmax
        ux, uy = c.bias_direction_image
        tx, ty = cx + length * ux, cy + length * uy
        head = min(4.0, 0.5 * length)
        px, py = -uy, ux
        out.append(
            f'<g class="arrow" {_cell_attrs(c)} data-bias="{c.bias_angle:.6f}">'
            f'<line x1="{_n(cx)}" y1="{_n(cy)}" x2="{_n(tx)}" y2="{_n(ty)}"/>'
            f'<polygon points="{_n(tx)},{_n(ty)} {_n(tx - head * ux + 0.5 * head * px)},{_n(ty - head * uy + 0.5 * head * py)} '
            f'{_n(tx - head * ux - 0.5 * head * px)},{_n(ty - head * uy - 0.5 * head * py)}"/></g>'
        )
    out.append("</g>")
    out += _frame(layout)
    out.append(
        f'<text class="scale-max" x="{_n(MARGIN + PLOT + 30)}" y="{_n(MARGIN + 10)}" font-family="sans-serif" '
        f'font-size="11">longest arrow {bmax:.3f} deg</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def grid_svgs(cells: Sequence[GridCellStats]) -> dict[str, str]:
    """All grid figures keyed by file name."""
    out = {}
    for key, (attr, title) in HEATMAP_FIELDS.items():
        axis = {"sigma_major": "major", "sigma_minor": "minor"}.get(key)
        out[f"heatmap_{key}.svg"] = heatmap_svg(cells, lambda c, a=attr: getattr(c, a), title + " [deg]", axis)
    out["quiver_bias.svg"] = quiver_svg(cells)
    return out
