"""Dataset directory I/O.

Layout: <root>/classes.txt and <root>/scenes/<id>/ containing
cam<i>.pgm (8-bit grayscale camera views), gt.pgm (class ids as pixel
values), and meta.txt (renderer-side record of rig and BEV extent;
never read by the model or the training loop).
"""

import os

import numpy as np

from .raster import BEVSpec, CLASS_NAMES, rasterize_bev
from .render import render_views
from .scene import generate_scene, rotate180

__all__ = ["write_pgm", "read_pgm", "generate_dataset", "list_scenes",
           "load_sample", "write_scene"]


def write_pgm(path, arr):
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError(f"pgm wants [H, W], got {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("pixel values outside [0, 255]")
        arr = arr.astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":  # comment line
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise ValueError(f"not a binary pgm: {path}")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    raw = data[pos:pos + width * height]
    if len(raw) != width * height:
        raise ValueError(f"truncated pgm: {path}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width)


def _write_meta(path, spec, rig):
    with open(path, "w") as fh:
        fh.write(f"bev.x_min = {spec.x_min}\nbev.x_max = {spec.x_max}\n")
        fh.write(f"bev.y_min = {spec.y_min}\nbev.y_max = {spec.y_max}\n")
        fh.write(f"bev.height = {spec.height}\nbev.width = {spec.width}\n")
        for cid, w in sorted(spec.line_widths.items()):
            fh.write(f"bev.line_width.{cid} = {w}\n")
        for i, cam in enumerate(rig):
            fh.write(f"cam{i}.fx = {cam.fx}\ncam{i}.fy = {cam.fy}\n")
            fh.write(f"cam{i}.cx = {cam.cx}\ncam{i}.cy = {cam.cy}\n")
            fh.write(f"cam{i}.width = {cam.width}\ncam{i}.height = {cam.height}\n")
            fh.write(f"cam{i}.mirrored = {int(cam.mirrored)}\n")
            fh.write(f"cam{i}.position = {' '.join(repr(v) for v in cam.position)}\n")
            rows = " ".join(repr(v) for v in cam.rotation.reshape(-1))
            fh.write(f"cam{i}.rotation = {rows}\n")


def write_scene(scene_dir, polylines, spec, rig, supersample=2):
    os.makedirs(scene_dir, exist_ok=True)
    images = render_views(polylines, rig, spec, supersample)
    gt = rasterize_bev(polylines, spec)
    for i in range(images.shape[0]):
        write_pgm(os.path.join(scene_dir, f"cam{i}.pgm"), images[i])
    write_pgm(os.path.join(scene_dir, "gt.pgm"), gt.astype(np.uint8))
    _write_meta(os.path.join(scene_dir, "meta.txt"), spec, rig)


def generate_dataset(root, num_scenes, spec, rig, start_seed=0,
                     mirror_pairs=False, supersample=2):
    """Write num_scenes scene directories under root/scenes.

    mirror_pairs: consecutive directories 2k and 2k+1 hold one scene and
    its half-turn rotation, so the symmetric front/rear rig sees the two
    samples with camera contents exactly swapped."""
    scenes_dir = os.path.join(root, "scenes")
    os.makedirs(scenes_dir, exist_ok=True)
    with open(os.path.join(root, "classes.txt"), "w") as fh:
        for cid, name in enumerate(CLASS_NAMES):
            fh.write(f"{cid} {name}\n")
    if mirror_pairs and num_scenes % 2:
        raise ValueError("mirror_pairs needs an even scene count")
    ids = []
    for k in range(num_scenes):
        if mirror_pairs:
            base = generate_scene(start_seed + k // 2, spec)
            polys = base if k % 2 == 0 else rotate180(base)
        else:
            polys = generate_scene(start_seed + k, spec)
        sid = str(k)
        write_scene(os.path.join(scenes_dir, sid), polys, spec, rig, supersample)
        ids.append(sid)
    return ids


def list_scenes(root):
    scenes_dir = os.path.join(root, "scenes")
    if not os.path.isdir(scenes_dir):
        raise FileNotFoundError(f"no scenes directory under {root}")
    names = [n for n in os.listdir(scenes_dir)
             if os.path.isdir(os.path.join(scenes_dir, n))]
    return sorted(names, key=lambda n: (len(n), n))


def load_sample(scene_dir):
    """-> (images float32 [N_c, 3, H, W] standardized per camera,
    gt int64 [H_g, W_g]).  The grayscale view is replicated onto three
    channels so the backbone keeps its usual input layout."""
    cams = sorted(n for n in os.listdir(scene_dir)
                  if n.startswith("cam") and n.endswith(".pgm"))
    if not cams:
        raise FileNotFoundError(f"no camera images in {scene_dir}")
    views = []
    for name in cams:
        img = read_pgm(os.path.join(scene_dir, name)).astype(np.float32)
        img = (img - img.mean()) / max(float(img.std()), 1e-6)
        views.append(np.repeat(img[None], 3, axis=0))
    gt = read_pgm(os.path.join(scene_dir, "gt.pgm")).astype(np.int64)
    return np.stack(views), gt
