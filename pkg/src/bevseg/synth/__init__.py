"""Synthetic multi-camera driving scenes with BEV ground truth.

Camera calibration lives only in this package: the renderer uses it to
draw images, the model never sees it.
"""

from .camera import Camera, desk_rig, front_rig, surround_rig
from .raster import BEVSpec, rasterize_bev
from .scene import generate_scene, rotate180
from .render import render_views
from .dataset import (generate_dataset, list_scenes, load_sample, read_pgm,
                      write_pgm)

__all__ = [
    "BEVSpec", "Camera", "desk_rig", "front_rig", "surround_rig",
    "generate_scene", "rotate180", "rasterize_bev", "render_views",
    "generate_dataset", "list_scenes", "load_sample", "read_pgm", "write_pgm",
]
