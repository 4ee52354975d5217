"""Level-set extraction on rectilinear MME maps.

Marching squares comes from ``skimage.measure.find_contours``; this module maps
its fractional index coordinates back to meters and adds the area measure used
to compare maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage.measure import find_contours

MISMATCH_THRESHOLD_DB = -3.0


@dataclass(frozen=True)
class Polyline:
    vertices: np.ndarray  # (V, 2) of (px, py)
    closed: bool


def _check_grid(xs, ys, field):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    field = np.asarray(field, dtype=float)
    if field.shape != (len(xs), len(ys)):
        raise ValueError(f"field shape {field.shape} does not match axes ({len(xs)}, {len(ys)})")
    if len(xs) < 2 or len(ys) < 2:
        raise ValueError("need at least a 2x2 grid")
    if np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
        raise ValueError("grid axes must be strictly increasing")
    return xs, ys, field


def mismatch_boundary(xs, ys, field, threshold_db: float = MISMATCH_THRESHOLD_DB) -> list[Polyline]:
    """Polylines where ``field == threshold_db``, ``field[i, j]`` sampled at ``(xs[i], ys[j])``.

    Vertices are linearly interpolated along cell edges. Cells touching a NaN
    sample are left out, so a contour stops at skipped points. Each polyline
    is either closed or ends on the grid boundary (or at a skipped cell).
    """
    xs, ys, field = _check_grid(xs, ys, field)
    valid = np.isfinite(field)
    if not valid.any():
        return []
    filled = np.where(valid, field, np.nanmin(field[valid]) - 1.0)
    mask = None if valid.all() else valid
    out = []
    for c in find_contours(filled, threshold_db, mask=mask):
        ix = np.arange(len(xs))
        iy = np.arange(len(ys))
        pts = np.column_stack([np.interp(c[:, 0], ix, xs), np.interp(c[:, 1], iy, ys)])
        closed = len(c) > 2 and np.array_equal(c[0], c[-1])
        out.append(Polyline(pts, bool(closed)))
    return out


def superlevel_area(xs, ys, field, threshold_db: float = MISMATCH_THRESHOLD_DB) -> float:
    """Area (m^2) where ``field >= threshold_db``, with trapezoid weights per sample.

    NaN samples count as below the threshold.
    """
    xs, ys, field = _check_grid(xs, ys, field)
    inside = np.where(np.isfinite(field), field >= threshold_db, False).astype(float)
    return float(np.trapezoid(np.trapezoid(inside, ys, axis=1), xs))


def polyline_length(line: Polyline) -> float:
    return float(np.sum(np.linalg.norm(np.diff(line.vertices, axis=0), axis=1)))
