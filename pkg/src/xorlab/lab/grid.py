"""Decision-boundary rasterization for 2-D inputs, as CSV and SVG."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..distribution import Dataset
from ..errors import UnsupportedDimensionError
from ..network import NetworkParams, forward_batch

SIGN_COLORS = {1: "#f4c7a1", -1: "#a9c8ec", 0: "#ffffff"}
LABEL_COLORS = {1: "#c0392b", -1: "#1f4e99"}


@dataclass
class GridResult:
    """``sign[i, k]`` is the network's sign at ``(xs[k], ys[i])``; 0 where ``f = 0``."""

    xs: np.ndarray
    ys: np.ndarray
    sign: np.ndarray
    bounds: tuple

    @property
    def res(self) -> int:
        return len(self.xs)

    def rows(self):
        for i, y in enumerate(self.ys):
            for k, x in enumerate(self.xs):
                yield x, y, int(self.sign[i, k])


def _centers(lo: float, hi: float, res: int) -> np.ndarray:
    h = (hi - lo) / res
    return lo + (np.arange(res) + 0.5) * h


def decision_boundary_grid(params: NetworkParams, bounds=(-2.0, 2.0, -2.0, 2.0),
                           res: int = 200) -> GridResult:
    """Evaluate ``sign(f)`` at the centers of a ``res x res`` grid of cells."""
    if params.d != 2:
        raise UnsupportedDimensionError(f"decision grid needs d = 2, got d = {params.d}")
    if res < 1:
        raise ValueError("res must be >= 1")
    x0lo, x0hi, x1lo, x1hi = map(float, bounds)
    if not (x0hi > x0lo and x1hi > x1lo):
        raise ValueError(f"empty bounds {bounds}")
    xs = _centers(x0lo, x0hi, res)
    ys = _centers(x1lo, x1hi, res)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    f = forward_batch(params, pts)
    sign = np.sign(f).astype(np.int8).reshape(res, res)
    return GridResult(xs=xs, ys=ys, sign=sign, bounds=(x0lo, x0hi, x1lo, x1hi))


def write_grid_csv(grid: GridResult, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("x0,x1,sign\n")
        for x, y, s in grid.rows():
            fh.write(f"{x:.17g},{y:.17g},{s}\n")
    return path


def read_grid_csv(path) -> np.ndarray:
    """Rows of ``(x0, x1, sign)``."""
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def write_grid_svg(grid: GridResult, path, dataset: Dataset | None = None,
                   size: int = 600, max_points: int = 1500, seed: int = 0) -> Path:
    """Two-color region plot with the training points on top.

    Regions are drawn as horizontal runs of equal-sign cells.  Each run carries
    ``data-row``, ``data-col`` and ``data-len`` attributes naming the grid
    cells it covers.  Points are filled by observed label; noisy points get a
    black outline.
    """
    path = Path(path)
    x0lo, x0hi, x1lo, x1hi = grid.bounds
    res = grid.res
    cw = size / res
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}" shape-rendering="crispEdges">']
    out.append('<g id="regions">')
    for i in range(res):
        row = grid.sign[i]
        # svg y grows downward, grid rows grow with x1
        top = (res - 1 - i) * cw
        k = 0
        while k < res:
            s = int(row[k])
            j = k
            while j < res and row[j] == s:
                j += 1
            out.append(f'<rect class="cell" data-row="{i}" data-col="{k}" data-len="{j - k}" '
                       f'data-sign="{s}" x="{k * cw:.4f}" y="{top:.4f}" '
                       f'width="{(j - k) * cw:.4f}" height="{cw:.4f}" fill="{SIGN_COLORS[s]}"/>')
            k = j
    out.append("</g>")
    if dataset is not None:
        if dataset.d != 2:
            raise UnsupportedDimensionError("points overlay needs d = 2")
        idx = np.arange(dataset.n)
        if dataset.n > max_points:
            idx = np.sort(np.random.default_rng(seed).choice(dataset.n, max_points, replace=False))
        sx = size / (x0hi - x0lo)
        sy = size / (x1hi - x1lo)
        out.append('<g id="points">')
        # clean points first so noisy ones stay visible
        for k in sorted(idx, key=lambda q: bool(dataset.noisy[q])):
            x, y = dataset.points[k]
            if not (x0lo <= x <= x0hi and x1lo <= y <= x1hi):
                continue
            lab = int(dataset.labels[k])
            stroke = ' stroke="#000000" stroke-width="1.2"' if dataset.noisy[k] else ""
            out.append(f'<circle class="point" data-label="{lab}" data-noisy="{int(dataset.noisy[k])}" '
                       f'cx="{(x - x0lo) * sx:.3f}" cy="{(x1hi - y) * sy:.3f}" r="2.2" '
                       f'fill="{LABEL_COLORS[lab]}"{stroke}/>')
        out.append("</g>")
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n")
    return path
