"""Ground-plane ray-cast renderer.

Each pixel's ray is intersected with the ground (z = 0); the hit point
picks up a checkerboard base brightness, then the scene polylines are
painted in draw order with class-specific brightness attenuated by
distance from the camera.  Supersampling provides the anti-aliasing.
Because pixels are shaded from their exact ground point, rendered lines
agree with the pinhole projection of the BEV geometry by construction.
"""

import numpy as np

from .raster import polyline_distance_sq

__all__ = ["render_views", "render_camera"]

CLASS_BRIGHTNESS = {1: 255.0, 2: 200.0, 3: 160.0}
CHECKER_M = 2.0
CHECKER_DARK = 70.0
CHECKER_LIGHT = 110.0
SKY = 40.0
ATTENUATION_M = 30.0  # line brightness halves ~30 m out


def render_camera(polylines, cam, spec, supersample=2):
    """-> [H, W] uint8 image."""
    s = int(supersample)
    hh, ww = cam.height * s, cam.width * s
    # supersample pixel centers expressed in original pixel coordinates
    u = (np.arange(ww) + 0.5) / s - 0.5
    v = (np.arange(hh) + 0.5) / s - 0.5
    uu, vv = np.meshgrid(u, v)
    d_cam = np.stack([(uu - cam.cx) / cam.fx, (vv - cam.cy) / cam.fy,
                      np.ones_like(uu)], axis=-1)
    d_world = d_cam @ cam.rotation  # row vectors times R == R.T @ d
    dz = d_world[..., 2]
    ground_mask = dz < -1e-9
    t = np.where(ground_mask, -cam.position[2] / np.where(ground_mask, dz, -1.0), 0.0)
    gx = cam.position[0] + t * d_world[..., 0]
    gy = cam.position[1] + t * d_world[..., 1]

    checker = (np.floor(gx / CHECKER_M) + np.floor(gy / CHECKER_M)) % 2
    img = np.where(checker > 0.5, CHECKER_LIGHT, CHECKER_DARK)

    dist = np.hypot(gx - cam.position[0], gy - cam.position[1])
    fade = 1.0 / (1.0 + dist / ATTENUATION_M)
    for pts, cid in polylines:
        hw = spec.half_width_m(cid) + 1e-6 * spec.resolution
        d2 = polyline_distance_sq(gx, gy, np.asarray(pts, dtype=np.float64))
        on = (d2 <= hw * hw) & ground_mask
        img = np.where(on, CLASS_BRIGHTNESS[cid] * fade, img)

    img = np.where(ground_mask, img, SKY)
    img = img.reshape(cam.height, s, cam.width, s).mean(axis=(1, 3))
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    if cam.mirrored:
        img = img[:, ::-1]
    return img


def render_views(polylines, rig, spec, supersample=2):
    """-> [N_c, H, W] uint8."""
    return np.stack([render_camera(polylines, cam, spec, supersample)
                     for cam in rig])
