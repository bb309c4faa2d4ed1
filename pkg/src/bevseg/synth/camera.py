"""Pinhole cameras and rig builders (renderer-only; never imported by
model code).

World frame matches the ego frame of `raster`: x forward, y left, z up.
Camera frame is the usual CV convention: z along the view direction,
x to the image right, y down.  R maps world to camera directions:
p_cam = R @ (p_world - position).
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["Camera", "desk_rig", "front_rig", "surround_rig", "make_camera"]


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # [3,3], world -> camera
    position: np.ndarray  # [3], camera center in world meters
    width: int
    height: int
    mirrored: bool = False  # flip the rendered image left-right

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width % 32 or self.height % 32:
            raise ValueError("image dims must be divisible by 32")
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.position = np.asarray(self.position, dtype=np.float64)
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-9:
            raise ValueError(f"rotation not orthonormal (err {err:.2e})")

    def project(self, pts_world):
        """[P,3] world points -> ([P,2] pixel coords, [P] depth).
        Points behind the camera get depth <= 0; callers cull those."""
        pts = np.asarray(pts_world, dtype=np.float64).reshape(-1, 3)
        cam = (pts - self.position) @ self.rotation.T
        z = cam[:, 2]
        safe = np.where(np.abs(z) < 1e-12, 1e-12, z)
        u = self.fx * cam[:, 0] / safe + self.cx
        v = self.fy * cam[:, 1] / safe + self.cy
        if self.mirrored:
            u = (self.width - 1) - u
        return np.stack([u, v], axis=1), z


def _snap(v, tol=1e-12):
    v = np.where(np.abs(v) < tol, 0.0, v)
    return v / np.linalg.norm(v)


def make_camera(yaw, pitch, cam_height, fx, fy, width, height,
                mirrored=False, position_xy=(0.0, 0.0)):
    """yaw: 0 looks forward (+x), pi/2 looks left (+y); pitch > 0 tilts
    the view down toward the ground."""
    cy_, sy_ = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    z_cam = _snap(np.array([cy_ * cp, sy_ * cp, -sp]))
    x_cam = _snap(np.array([sy_, -cy_, 0.0]))
    y_cam = _snap(np.cross(z_cam, x_cam))
    rot = np.stack([x_cam, y_cam, z_cam])
    pos = np.array([position_xy[0], position_xy[1], cam_height])
    return Camera(fx=fx, fy=fy, cx=width / 2.0, cy=height / 2.0,
                  rotation=rot, position=pos, width=width, height=height,
                  mirrored=mirrored)


def desk_rig(width=224, height=128, fx=70.0, fy=70.0, cam_height=1.5,
             pitch=0.18):
    """Front and rear cameras on an exactly symmetric mount."""
    front = make_camera(0.0, pitch, cam_height, fx, fy, width, height)
    rear = make_camera(np.pi, pitch, cam_height, fx, fy, width, height)
    return [front, rear]


def front_rig(width=224, height=128, fx=70.0, fy=70.0, cam_height=1.5,
              pitch=0.18):
    return [make_camera(0.0, pitch, cam_height, fx, fy, width, height)]


def surround_rig(cameras=6, width=224, height=128, fx=70.0, fy=70.0,
                 cam_height=1.5, pitch=0.18):
    step = 2.0 * np.pi / cameras
    return [make_camera(i * step, pitch, cam_height, fx, fy, width, height)
            for i in range(cameras)]
