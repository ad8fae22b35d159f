import json

import numpy as np
import pytest
from PIL import Image

from texmap.camera import PinholeCamera, load_views
from texmap.errors import InputError

from conftest import identity_camera


class TestProject:
    def test_optical_axis(self):
        cam = identity_camera()
        assert cam.project((0.0, 0.0, 1.0)) == (50.0, 50.0, 1.0)

    def test_off_axis(self):
        cam = identity_camera()
        assert cam.project((0.5, 0.0, 1.0)) == (100.0, 50.0, 1.0)

    def test_behind_camera(self):
        cam = identity_camera()
        assert cam.project((0.0, 0.0, -1.0)) is None

    def test_project_points_matches_scalar(self):
        rng = np.random.default_rng(7)
        R, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        cam = PinholeCamera(fx=120, fy=110, cx=40, cy=30, R=R, t=rng.normal(size=3),
                            width=100, height=80)
        pts = rng.normal(size=(50, 3)) * 2
        uvz, in_front = cam.project_points(pts)
        for k in range(len(pts)):
            scalar = cam.project(pts[k])
            if scalar is None:
                assert not in_front[k]
            else:
                assert in_front[k]
                np.testing.assert_allclose(uvz[k], scalar, rtol=1e-12)

    def test_scale_consistency(self):
        # moving the point away from the camera center along the same ray
        # keeps (u, v) and scales depth
        rng = np.random.default_rng(3)
        R, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        cam = PinholeCamera(fx=90, fy=95, cx=32, cy=24, R=R, t=rng.normal(size=3),
                            width=64, height=48)
        c = cam.center()
        x = c + rng.normal(size=3)
        base = cam.project(x)
        if base is None:
            x = c - (x - c)
            base = cam.project(x)
        for s in (2.0, 5.0, 0.5):
            u, v, d = cam.project(c + s * (x - c))
            assert abs(u - base[0]) < 1e-8 and abs(v - base[1]) < 1e-8
            assert abs(d - s * base[2]) < 1e-9 * max(1, d)

    def test_unproject_round_trip(self):
        rng = np.random.default_rng(11)
        R, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        cam = PinholeCamera(fx=150, fy=140, cx=60, cy=40, R=R, t=rng.normal(size=3),
                            width=128, height=96)
        for _ in range(20):
            u, v, d = rng.uniform(0, 90), rng.uniform(0, 70), rng.uniform(0.2, 9)
            uu, vv, dd = cam.project(cam.unproject(u, v, d))
            assert abs(uu - u) < 1e-6 and abs(vv - v) < 1e-6 and abs(dd - d) < 1e-9

    def test_invalid_rotation_rejected(self):
        with pytest.raises(InputError, match="orthonormal"):
            PinholeCamera(fx=1, fy=1, cx=0, cy=0, R=np.ones((3, 3)), t=np.zeros(3),
                          width=10, height=10)

    def test_invalid_intrinsics_rejected(self):
        with pytest.raises(InputError, match="positive"):
            PinholeCamera(fx=-1, fy=1, cx=0, cy=0, R=np.eye(3), t=np.zeros(3),
                          width=10, height=10)
        with pytest.raises(InputError, match="principal point"):
            PinholeCamera(fx=1, fy=1, cx=20, cy=0, R=np.eye(3), t=np.zeros(3),
                          width=10, height=10)


def manifest_entry(vid, image, width=8, height=6):
    return {
        "id": vid, "image": image, "width": width, "height": height,
        "fx": 10.0, "fy": 10.0, "cx": 4.0, "cy": 3.0,
        "R": [1, 0, 0, 0, 1, 0, 0, 0, 1], "t": [0, 0, 0],
    }


def write_png(path, width=8, height=6, value=100):
    Image.fromarray(np.full((height, width, 3), value, dtype=np.uint8)).save(path)


class TestLoadViews:
    def test_two_views_in_order(self, tmp_path):
        write_png(tmp_path / "a.png")
        write_png(tmp_path / "b.png", value=5)
        manifest = tmp_path / "views.json"
        manifest.write_text(json.dumps([manifest_entry(3, "a.png"), manifest_entry(1, "b.png")]))
        views = load_views(manifest)
        assert [v.id for v in views] == [3, 1]
        assert views[1].pixels[0, 0, 0] == 5

    def test_dimension_mismatch_fatal(self, tmp_path):
        write_png(tmp_path / "a.png", width=8, height=6)
        manifest = tmp_path / "views.json"
        manifest.write_text(json.dumps([manifest_entry(0, "a.png", width=8, height=7)]))
        with pytest.raises(InputError, match="declares"):
            load_views(manifest)

    def test_empty_manifest(self, tmp_path):
        manifest = tmp_path / "views.json"
        manifest.write_text("[]")
        with pytest.raises(InputError, match="at least one view"):
            load_views(manifest)

    def test_duplicate_id(self, tmp_path):
        write_png(tmp_path / "a.png")
        manifest = tmp_path / "views.json"
        manifest.write_text(json.dumps([manifest_entry(2, "a.png"), manifest_entry(2, "a.png")]))
        with pytest.raises(InputError, match="duplicate view id"):
            load_views(manifest)

    def test_missing_image(self, tmp_path):
        manifest = tmp_path / "views.json"
        manifest.write_text(json.dumps([manifest_entry(0, "gone.png")]))
        with pytest.raises(InputError, match="image file not found"):
            load_views(manifest)

    def test_missing_key(self, tmp_path):
        entry = manifest_entry(0, "a.png")
        del entry["fx"]
        manifest = tmp_path / "views.json"
        manifest.write_text(json.dumps([entry]))
        with pytest.raises(InputError, match="missing keys"):
            load_views(manifest)

    def test_malformed_json(self, tmp_path):
        manifest = tmp_path / "views.json"
        manifest.write_text("{nope")
        with pytest.raises(InputError, match="invalid JSON"):
            load_views(manifest)
