"""Random road-structure scene generation.

A scene is a list of (points [P,2] ego meters, class_id) drawn in list
order: a few smooth longitudinal lines (dividers and boundaries) plus
up to two transverse crossing segments, all inside the BEV extent.
"""

import numpy as np

__all__ = ["generate_scene", "rotate180"]

SCENE_STREAM = 1  # rng stream tag, keeps scene draws apart from other consumers


def generate_scene(seed, spec):
    """Deterministic per (seed, spec extents)."""
    rng = np.random.default_rng([seed, SCENE_STREAM])
    x0, x1, y0, y1 = spec.x_min, spec.x_max, spec.y_min, spec.y_max
    yr = y1 - y0
    polys = []
    xs = np.linspace(x0, x1, 17)
    for _ in range(int(rng.integers(2, 7))):
        base = rng.uniform(y0 + 0.08 * yr, y1 - 0.08 * yr)
        amp = rng.uniform(0.0, 0.08 * yr)
        freq = rng.uniform(0.5, 1.5)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        ys = base + amp * np.sin(2.0 * np.pi * freq * (xs - x0) / (x1 - x0) + phase)
        np.clip(ys, y0, y1, out=ys)
        polys.append((np.stack([xs, ys], axis=1), int(rng.choice([1, 3]))))
    for _ in range(int(rng.integers(0, 3))):
        xc = rng.uniform(x0 + 0.1 * (x1 - x0), x1 - 0.1 * (x1 - x0))
        ya, yb = np.sort(rng.uniform(y0, y1, size=2))
        if yb - ya < 0.2 * yr:
            mid = 0.5 * (ya + yb)
            ya, yb = mid - 0.1 * yr, mid + 0.1 * yr
        ya, yb = max(ya, y0), min(yb, y1)
        polys.append((np.array([[xc, ya], [xc, yb]]), 2))
    return polys


def rotate180(polylines):
    """The scene as seen after a half-turn of the world about ego z."""
    return [(-np.asarray(pts, dtype=np.float64), cid) for pts, cid in polylines]
