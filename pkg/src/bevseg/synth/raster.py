"""BEV ground-truth rasterization.

Ego frame: x forward, y left, z up.  Raster layout: row 0 holds the
largest x (far ahead at the top), column 0 the largest y (ego-left on
the image left); pixel (r, c) is centered at
x = x_max - (r + 0.5) * res, y = y_max - (c + 0.5) * res.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["BEVSpec", "rasterize_bev", "pixel_centers"]

CLASS_NAMES = ["background", "divider", "ped_crossing", "boundary"]


@dataclass
class BEVSpec:
    x_min: float = -20.0
    x_max: float = 20.0
    y_min: float = -10.0
    y_max: float = 10.0
    height: int = 160
    width: int = 80
    # class id -> drawn line width in GT pixels
    line_widths: dict = field(default_factory=lambda: {1: 5, 2: 5, 3: 5})

    def __post_init__(self):
        rx = (self.x_max - self.x_min) / self.height
        ry = (self.y_max - self.y_min) / self.width
        if not np.isclose(rx, ry, rtol=0.0, atol=1e-9):
            raise ValueError(f"cells must be square: {rx} x {ry} m")
        if rx <= 0:
            raise ValueError("extent must be positive")
        if any(w < 1 for w in self.line_widths.values()):
            raise ValueError("line widths must be >= 1 pixel")

    @property
    def resolution(self):
        return (self.x_max - self.x_min) / self.height

    def half_width_m(self, class_id):
        """Half the drawn line width in meters, matching the renderer."""
        return (self.line_widths[class_id] - 1) / 2.0 * self.resolution


def pixel_centers(spec):
    """(x_grid, y_grid) of shape [H_g, W_g] in ego meters."""
    res = spec.resolution
    xs = spec.x_max - (np.arange(spec.height) + 0.5) * res
    ys = spec.y_max - (np.arange(spec.width) + 0.5) * res
    return np.meshgrid(xs, ys, indexing="ij")


def segment_distance_sq(px, py, a, b):
    """Squared distance from points (px, py) to segment a-b (2-vectors)."""
    dx, dy = b[0] - a[0], b[1] - a[1]
    seg_len_sq = dx * dx + dy * dy
    if seg_len_sq < 1e-18:
        return (px - a[0]) ** 2 + (py - a[1]) ** 2
    t = ((px - a[0]) * dx + (py - a[1]) * dy) / seg_len_sq
    t = np.clip(t, 0.0, 1.0)
    return (px - (a[0] + t * dx)) ** 2 + (py - (a[1] + t * dy)) ** 2


def polyline_distance_sq(px, py, pts):
    d2 = np.full(np.broadcast(px, py).shape, np.inf)
    for i in range(len(pts) - 1):
        np.minimum(d2, segment_distance_sq(px, py, pts[i], pts[i + 1]), out=d2)
    return d2


def rasterize_bev(polylines, spec):
    """Draw (points [P,2], class_id) polylines; later entries overwrite
    earlier ones where they overlap.  A pixel belongs to a line when its
    center is within the class half-width of the polyline."""
    gx, gy = pixel_centers(spec)
    raster = np.zeros((spec.height, spec.width), dtype=np.int64)
    tol = 1e-6 * spec.resolution
    for pts, cid in polylines:
        pts = np.asarray(pts, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError(f"polyline needs [P>=2, 2] points, got {pts.shape}")
        hw = spec.half_width_m(cid) + tol
        d2 = polyline_distance_sq(gx, gy, pts)
        raster[d2 <= hw * hw] = cid
    return raster
