"""Scene generation, rasterization, pinhole projection, rendering,
and dataset I/O, plus the renderer/model separation rule."""

import inspect
import os

import numpy as np
import pytest

from bevseg.synth import (BEVSpec, Camera, desk_rig, generate_dataset,
                          generate_scene, list_scenes, load_sample,
                          rasterize_bev, read_pgm, render_views, rotate180,
                          write_pgm)
from bevseg.synth.camera import make_camera
from bevseg.synth.render import render_camera

DESK = BEVSpec()


def scene_equal(a, b):
    return len(a) == len(b) and all(
        ca == cb and np.array_equal(pa, pb)
        for (pa, ca), (pb, cb) in zip(a, b))


class TestSceneGenerator:
    def test_same_seed_identical(self):
        assert scene_equal(generate_scene(7, DESK), generate_scene(7, DESK))

    def test_different_seeds_differ(self):
        assert not scene_equal(generate_scene(1, DESK), generate_scene(2, DESK))

    def test_points_inside_extent(self):
        for seed in range(50):
            for pts, _ in generate_scene(seed, DESK):
                assert pts[:, 0].min() >= DESK.x_min - 1e-9
                assert pts[:, 0].max() <= DESK.x_max + 1e-9
                assert pts[:, 1].min() >= DESK.y_min - 1e-9
                assert pts[:, 1].max() <= DESK.y_max + 1e-9

    def test_structure_counts(self):
        for seed in range(50):
            polys = generate_scene(seed, DESK)
            longitudinal = [c for _, c in polys if c in (1, 3)]
            crossings = [(p, c) for p, c in polys if c == 2]
            assert 2 <= len(longitudinal) <= 6
            assert len(crossings) <= 2
            for pts, _ in crossings:
                assert pts.shape == (2, 2)
                assert pts[0, 0] == pts[1, 0]  # transverse: constant x

    def test_every_class_common_across_seeds(self):
        hits = {1: 0, 2: 0, 3: 0}
        n = 1000
        for seed in range(n):
            present = {c for _, c in generate_scene(seed, DESK)}
            for c in present:
                hits[c] += 1
        for c, count in hits.items():
            assert count >= 0.1 * n, f"class {c} in only {count}/{n} scenes"

    def test_rotate180_negates_points(self):
        polys = generate_scene(3, DESK)
        rot = rotate180(polys)
        for (pts, cid), (rpts, rcid) in zip(polys, rot):
            assert cid == rcid
            assert np.array_equal(rpts, -pts)


class TestRasterizer:
    def test_empty_scene_is_background(self):
        assert np.all(rasterize_bev([], DESK) == 0)

    def test_column_pixel_count_width_5(self):
        # longitudinal line along a column center: 5 px wide times H rows
        yc = DESK.y_max - (40 + 0.5) * DESK.resolution
        line = (np.array([[DESK.x_min, yc], [DESK.x_max, yc]]), 1)
        raster = rasterize_bev([line], DESK)
        assert int((raster == 1).sum()) == 5 * DESK.height
        cols = np.unique(np.nonzero(raster)[1])
        assert np.array_equal(cols, np.arange(38, 43))

    def test_column_pixel_count_width_3(self):
        spec = BEVSpec(line_widths={1: 3, 2: 5, 3: 5})
        yc = spec.y_max - (40 + 0.5) * spec.resolution
        line = (np.array([[spec.x_min, yc], [spec.x_max, yc]]), 1)
        assert int((rasterize_bev([line], spec) == 1).sum()) == 3 * spec.height

    def test_later_polylines_overwrite(self):
        yc = DESK.y_max - (40 + 0.5) * DESK.resolution
        xc = DESK.x_max - (80 + 0.5) * DESK.resolution
        vert = (np.array([[DESK.x_min, yc], [DESK.x_max, yc]]), 1)
        horiz = (np.array([[xc, DESK.y_min], [xc, DESK.y_max]]), 2)
        raster = rasterize_bev([vert, horiz], DESK)
        assert raster[80, 40] == 2
        raster = rasterize_bev([horiz, vert], DESK)
        assert raster[80, 40] == 1

    def test_polyline_validation(self):
        with pytest.raises(ValueError):
            rasterize_bev([(np.zeros((1, 2)), 1)], DESK)
        with pytest.raises(ValueError):
            rasterize_bev([(np.zeros((3, 3)), 1)], DESK)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            BEVSpec(height=100)  # cells not square
        with pytest.raises(ValueError):
            BEVSpec(line_widths={1: 0, 2: 5, 3: 5})


class TestPinhole:
    def test_hand_fixture_60_50(self):
        # camera frame == world frame: point (1, 0, 10) -> pixel (60, 50)
        cam = Camera(fx=100.0, fy=100.0, cx=50.0, cy=50.0,
                     rotation=np.eye(3), position=np.zeros(3),
                     width=128, height=128)
        px, z = cam.project(np.array([[1.0, 0.0, 10.0]]))
        assert np.allclose(px[0], [60.0, 50.0])
        assert np.isclose(z[0], 10.0)

    def test_optical_axis_hits_center(self):
        cam = make_camera(yaw=0.3, pitch=0.1, cam_height=1.5, fx=70.0,
                          fy=70.0, width=224, height=128)
        z_cam = cam.rotation[2]
        for d in (2.0, 17.0):
            px, z = cam.project((cam.position + d * z_cam)[None])
            assert np.allclose(px[0], [cam.cx, cam.cy], atol=1e-9)
            assert np.isclose(z[0], d)

    def test_points_behind_get_negative_depth(self):
        cam = make_camera(0.0, 0.0, 1.5, 70.0, 70.0, 224, 128)
        _, z = cam.project(np.array([[-5.0, 0.0, 1.5]]))
        assert z[0] < 0

    def test_camera_validation(self):
        with pytest.raises(ValueError):
            Camera(fx=-1.0, fy=70.0, cx=0, cy=0, rotation=np.eye(3),
                   position=np.zeros(3), width=224, height=128)
        with pytest.raises(ValueError):
            Camera(fx=70.0, fy=70.0, cx=0, cy=0, rotation=2 * np.eye(3),
                   position=np.zeros(3), width=224, height=128)
        with pytest.raises(ValueError):
            Camera(fx=70.0, fy=70.0, cx=0, cy=0, rotation=np.eye(3),
                   position=np.zeros(3), width=100, height=128)


class TestRenderer:
    def test_rear_line_invisible_in_front_camera(self):
        rig = desk_rig(width=96, height=64)
        behind = [(np.array([[-15.0, 0.0], [-5.0, 0.0]]), 1)]
        with_line = render_views(behind, rig, DESK, supersample=1)
        without = render_views([], rig, DESK, supersample=1)
        assert np.array_equal(with_line[0], without[0])
        assert not np.array_equal(with_line[1], without[1])

    def test_lit_pixels_near_analytic_projection(self):
        cam = make_camera(0.0, 0.18, 1.5, 70.0, 70.0, 224, 128)
        target = np.array([8.0, 1.0, 0.0])
        stub = [(np.array([[7.9, 1.0], [8.1, 1.0]]), 1)]
        img = render_camera(stub, cam, DESK, supersample=1)
        px, z = cam.project(target[None])
        assert z[0] > 0
        lit = np.argwhere(img > 150).astype(np.float64)
        assert len(lit)
        d = np.hypot(lit[:, 1] - px[0, 0], lit[:, 0] - px[0, 1]).min()
        assert d <= 1.0

    def test_deterministic(self):
        rig = desk_rig(width=96, height=64)
        polys = generate_scene(0, DESK)
        a = render_views(polys, rig, DESK)
        b = render_views(polys, rig, DESK)
        assert np.array_equal(a, b)


class TestPgm:
    def test_round_trip_bitwise(self, tmp_path):
        arr = np.random.default_rng(0).integers(0, 256, (37, 23)).astype(np.uint8)
        path = tmp_path / "img.pgm"
        write_pgm(path, arr)
        assert np.array_equal(read_pgm(path), arr)

    def test_header_comment_skipped(self, tmp_path):
        path = tmp_path / "c.pgm"
        body = bytes(range(6))
        path.write_bytes(b"P5\n# a comment\n3 2\n255\n" + body)
        assert np.array_equal(read_pgm(path),
                              np.frombuffer(body, np.uint8).reshape(2, 3))

    def test_bad_inputs(self, tmp_path):
        with pytest.raises(ValueError):
            write_pgm(tmp_path / "x.pgm", np.zeros((2, 2, 2)))
        with pytest.raises(ValueError):
            write_pgm(tmp_path / "x.pgm", np.full((2, 2), 300.0))
        p2 = tmp_path / "p2.pgm"
        p2.write_bytes(b"P2\n2 2\n255\n aaaa")
        with pytest.raises(ValueError):
            read_pgm(p2)
        trunc = tmp_path / "t.pgm"
        trunc.write_bytes(b"P5\n4 4\n255\nab")
        with pytest.raises(ValueError):
            read_pgm(trunc)
        deep = tmp_path / "d.pgm"
        deep.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
        with pytest.raises(ValueError):
            read_pgm(deep)


@pytest.fixture()
def rig():
    return desk_rig(width=96, height=64)


class TestDataset:
    def test_bytes_reproducible(self, tmp_path, rig):
        roots = []
        for name in ("a", "b"):
            root = tmp_path / name
            generate_dataset(root, 2, DESK, rig, supersample=1)
            roots.append(root)
        files = []
        for base, _, names in os.walk(roots[0]):
            rel = os.path.relpath(base, roots[0])
            files += [os.path.join(rel, n) for n in names]
        assert files
        for rel in files:
            a = (roots[0] / rel).read_bytes()
            b = (roots[1] / rel).read_bytes()
            assert a == b, rel

    def test_layout_and_loading(self, tmp_path, rig):
        generate_dataset(tmp_path, 3, DESK, rig, supersample=1)
        names = list_scenes(tmp_path)
        assert names == ["0", "1", "2"]
        classes = (tmp_path / "classes.txt").read_text().splitlines()
        assert classes[0] == "0 background"
        assert len(classes) == 4
        images, gt = load_sample(tmp_path / "scenes" / "0")
        assert images.shape == (2, 3, 64, 96)
        assert images.dtype == np.float32
        assert gt.shape == (DESK.height, DESK.width)
        assert gt.dtype == np.int64
        # per-camera standardization
        for c in range(2):
            assert abs(float(images[c].mean())) < 1e-4
            assert abs(float(images[c, 0].std()) - 1.0) < 1e-3
        want_gt = rasterize_bev(generate_scene(0, DESK), DESK)
        assert np.array_equal(gt, want_gt)

    def test_scene_name_ordering(self, tmp_path):
        scenes = tmp_path / "scenes"
        for n in range(12):
            os.makedirs(scenes / str(n))
        assert list_scenes(tmp_path) == [str(n) for n in range(12)]

    def test_missing_paths_raise(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            list_scenes(tmp_path / "nope")
        empty = tmp_path / "empty_scene"
        os.makedirs(empty)
        with pytest.raises(FileNotFoundError):
            load_sample(empty)

    def test_mirror_pairs(self, tmp_path, rig):
        generate_dataset(tmp_path, 4, DESK, rig, mirror_pairs=True,
                         supersample=1)
        _, gt0 = load_sample(tmp_path / "scenes" / "0")
        _, gt1 = load_sample(tmp_path / "scenes" / "1")
        assert np.array_equal(gt1, np.rot90(gt0, 2))
        img0, _ = load_sample(tmp_path / "scenes" / "0")
        img1, _ = load_sample(tmp_path / "scenes" / "1")
        # half-turn swaps what the symmetric front/rear cameras see
        diff = np.abs(img1[0] - img0[1])
        assert float(diff.mean()) < 0.02
        assert float(np.abs(img1[1] - img0[0]).mean()) < 0.02
        assert not np.array_equal(img1[0], img0[0])

    def test_mirror_pairs_need_even_count(self, tmp_path, rig):
        with pytest.raises(ValueError):
            generate_dataset(tmp_path, 3, DESK, rig, mirror_pairs=True)


class TestRendererModelSeparation:
    MODEL_MODULES = ["tensor", "ops", "nn", "sampling", "backbone",
                     "encoder", "decoder", "seg_head", "model", "optim",
                     "metrics", "kernels/__init__", "kernels/numpy_ref"]

    def test_model_modules_never_import_renderer(self):
        import bevseg
        root = os.path.dirname(bevseg.__file__)
        for mod in self.MODEL_MODULES:
            with open(os.path.join(root, mod + ".py")) as fh:
                for line in fh:
                    line = line.strip()
                    if line.startswith(("import ", "from ")):
                        assert "synth" not in line, f"{mod}: {line}"

    def test_forward_takes_images_only(self):
        from bevseg.model import BEVSegmenter
        params = list(inspect.signature(BEVSegmenter.forward).parameters)
        assert params == ["self", "images", "capture"]

    def test_training_loop_never_touches_calibration(self):
        import bevseg
        root = os.path.dirname(bevseg.__file__)
        banned = ("Camera", "desk_rig", "front_rig", "surround_rig",
                  "render_views")
        with open(os.path.join(root, "train.py")) as fh:
            text = fh.read()
        for name in banned:
            assert name not in text
