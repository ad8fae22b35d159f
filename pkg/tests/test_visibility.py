import numpy as np
import pytest

from texmap.mesh import Mesh
from texmap.synth import make_cube, look_at_camera
from texmap.visibility import (
    face_visibility,
    rasterize_all_views,
    rasterize_depth,
    triangle_coverage,
)

from conftest import identity_camera, make_view


def tri_mesh(*triangles):
    """Mesh from explicit corner triples (winding as given)."""
    vertices = np.array([p for tri in triangles for p in tri], dtype=np.float64)
    faces = np.arange(len(vertices), dtype=np.int32).reshape(-1, 3)
    tri_pts = vertices[faces]
    cross = np.cross(tri_pts[:, 1] - tri_pts[:, 0], tri_pts[:, 2] - tri_pts[:, 0])
    normals = cross / np.linalg.norm(cross, axis=1)[:, None]
    return Mesh(vertices=vertices, faces=faces, face_normals=normals)


# camera at origin looking +z: clockwise-in-xy winding faces the camera
FRONT_TRI_Z2 = [(0, 0, 2.0), (0, 0.8, 2.0), (0.8, 0, 2.0)]


def point_in_triangle_oracle(px, py, uv):
    """Barycentric solve, independent of the edge-function rasterizer."""
    a = np.array([[uv[1][0] - uv[0][0], uv[2][0] - uv[0][0]],
                  [uv[1][1] - uv[0][1], uv[2][1] - uv[0][1]]])
    b = np.array([px - uv[0][0], py - uv[0][1]])
    w1, w2 = np.linalg.solve(a, b)
    return w1 >= 0 and w2 >= 0 and w1 + w2 <= 1


class TestRasterizeDepth:
    def test_fronto_triangle_depth_and_face_id(self, front_camera):
        mesh = tri_mesh(FRONT_TRI_Z2)
        buf = rasterize_depth(mesh, make_view(front_camera))
        assert buf.depth[50, 50] == 2.0
        assert buf.face[50, 50] == 0

    def test_nearer_triangle_wins(self, front_camera):
        near = [(0, 0, 1.0), (0, 0.2, 1.0), (0.2, 0, 1.0)]
        mesh = tri_mesh(FRONT_TRI_Z2, near)
        buf = rasterize_depth(mesh, make_view(front_camera))
        assert buf.depth[50, 50] == 1.0
        assert buf.face[50, 50] == 1
        # outside the near triangle's footprint the far one remains
        assert buf.depth[50, 85] == 2.0
        assert buf.face[50, 85] == 0

    def test_empty_mesh(self, front_camera):
        mesh = Mesh(
            vertices=np.zeros((0, 3)),
            faces=np.zeros((0, 3), dtype=np.int32),
            face_normals=np.zeros((0, 3)),
        )
        buf = rasterize_depth(mesh, make_view(front_camera))
        assert np.isinf(buf.depth).all()
        assert (buf.face == -1).all()

    def test_back_face_not_drawn(self, front_camera):
        flipped = [FRONT_TRI_Z2[0], FRONT_TRI_Z2[2], FRONT_TRI_Z2[1]]
        buf = rasterize_depth(tri_mesh(flipped), make_view(front_camera))
        assert np.isinf(buf.depth).all()

    def test_equal_depth_tie_smaller_face_id(self, front_camera):
        mesh = tri_mesh(FRONT_TRI_Z2, FRONT_TRI_Z2)
        buf = rasterize_depth(mesh, make_view(front_camera))
        covered = buf.face >= 0
        assert (buf.face[covered] == 0).all()

    def test_perspective_correct_depth(self):
        # slanted triangle: interpolated depth must equal the analytic
        # ray/plane intersection (1/z barycentric), not affine-z
        cam = identity_camera()
        tri = [(-1.0, -1.0, 1.0), (-1.0, 3.0, 3.0), (3.0, -1.0, 3.0)]
        mesh = tri_mesh(tri)
        buf = rasterize_depth(mesh, make_view(cam))
        covered = np.nonzero(buf.face == 0)
        assert len(covered[0]) > 100
        for py, px in zip(*covered):
            # plane x + y - 2z + 4 = 0; pixel ray (dx, dy, 1) * t
            dx = (px - cam.cx) / cam.fx
            dy = (py - cam.cy) / cam.fy
            t = 4.0 / (2.0 - dx - dy)
            assert abs(buf.depth[py, px] - t) < 1e-9


class TestFaceVisibility:
    def test_unoccluded_face_fully_visible(self, front_camera):
        mesh = tri_mesh(FRONT_TRI_Z2)
        buf = rasterize_depth(mesh, make_view(front_camera))
        vis = face_visibility(mesh, 0, make_view(front_camera), buf)
        assert vis.visible_count == vis.footprint_pixels > 0

    def test_fully_occluded_face_empty(self, front_camera):
        # occluder at half the depth covering the whole footprint
        occluder = [(-0.4, -0.4, 1.0), (-0.4, 1.2, 1.0), (1.2, -0.4, 1.0)]
        mesh = tri_mesh(FRONT_TRI_Z2, occluder)
        buf = rasterize_depth(mesh, make_view(front_camera))
        vis = face_visibility(mesh, 0, make_view(front_camera), buf)
        assert vis.visible_count == 0
        assert not vis.is_visible

    def test_partial_occlusion_matches_ray_oracle(self, front_camera):
        # occluder hides roughly 40% of the background triangle; corners are
        # offset so no projected edge passes exactly through a pixel center
        bg = [(0.0013, 0.0017, 2.0), (0.0013, 0.8017, 2.0), (0.8013, 0.0017, 2.0)]
        # hypotenuse x + y = 0.2531 at z=1 covers (0.2531 / 0.4)^2 ~ 40% of bg
        occluder = [(-0.5, -0.5, 1.0), (-0.5, 0.7531, 1.0), (0.7531, -0.5, 1.0)]
        mesh = tri_mesh(bg, occluder)
        view = make_view(front_camera)
        buf = rasterize_depth(mesh, view)
        vis = face_visibility(mesh, 0, view, buf)

        # oracle: per-pixel test of both projected triangles
        cam = front_camera
        def project(tri):
            return [(cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy) for x, y, z in tri]

        bg_uv = project(bg)
        occ_uv = project(occluder)
        footprint = visible = 0
        for py in range(cam.height):
            for px in range(cam.width):
                if not point_in_triangle_oracle(px, py, bg_uv):
                    continue
                footprint += 1
                if not point_in_triangle_oracle(px, py, occ_uv):
                    visible += 1  # occluder is nearer wherever it covers
        assert vis.footprint_pixels == footprint
        assert abs(vis.visible_count - visible) <= 2  # shared-edge pixels
        frac = vis.visible_count / vis.footprint_pixels
        assert 0.5 < frac < 0.7

    def test_self_consistency_with_zero_bias(self):
        # every pixel the buffer attributes to a face is visible for it
        mesh = make_cube()
        cam = look_at_camera((1.7, 1.1, 0.9), (0, 0, 0), fx=200, width=160, height=160)
        view = make_view(cam)
        buf = rasterize_depth(mesh, view)
        for fid in range(mesh.num_faces):
            owned = np.stack(np.nonzero(buf.face == fid)[::-1], axis=1)
            if len(owned) == 0:
                continue
            vis = face_visibility(mesh, fid, view, buf, bias=0.0)
            got = set(map(tuple, vis.visible_px.tolist()))
            assert set(map(tuple, owned.tolist())) <= got

    def test_bias_monotonicity(self):
        mesh = make_cube()
        cam = look_at_camera((2.0, 1.3, 1.1), (0, 0, 0), fx=180, width=128, height=128)
        view = make_view(cam)
        buf = rasterize_depth(mesh, view)
        for fid in range(mesh.num_faces):
            prev = None
            for bias in (0.0, 1e-3, 1e-1):
                vis = face_visibility(mesh, fid, view, buf, bias=bias)
                cur = set(map(tuple, vis.visible_px.tolist()))
                if prev is not None:
                    assert prev <= cur
                prev = cur

    def test_back_facing_empty(self, front_camera):
        flipped = [FRONT_TRI_Z2[0], FRONT_TRI_Z2[2], FRONT_TRI_Z2[1]]
        mesh = tri_mesh(flipped)
        buf = rasterize_depth(mesh, make_view(front_camera))
        vis = face_visibility(mesh, 0, make_view(front_camera), buf)
        assert not vis.is_visible

    def test_subpixel_face_uses_analytic_area(self, front_camera):
        # projects inside one pixel cell, covering no pixel center
        tri = [(0.003, 0.003, 1.0), (0.003, 0.007, 1.0), (0.007, 0.003, 1.0)]
        mesh = tri_mesh(tri)
        buf = rasterize_depth(mesh, make_view(front_camera))
        vis = face_visibility(mesh, 0, make_view(front_camera), buf)
        assert vis.subpixel and vis.is_visible
        assert 0.0 < vis.subpixel_area < 1.0
        np.testing.assert_allclose(vis.subpixel_area, 0.08, rtol=1e-9)


class TestDeterminism:
    def test_worker_count_invariance(self):
        mesh = make_cube()
        cams = [
            look_at_camera(eye, (0, 0, 0), fx=150, width=96, height=96)
            for eye in [(2, 0.3, 0.2), (0.1, 2, 0.4), (-1.5, 0.8, 1.0)]
        ]
        views = [make_view(c, view_id=i) for i, c in enumerate(cams)]
        serial = rasterize_all_views(mesh, views, workers=1)
        threaded = rasterize_all_views(mesh, views, workers=4)
        for a, b in zip(serial, threaded):
            np.testing.assert_array_equal(a.depth, b.depth)
            np.testing.assert_array_equal(a.face, b.face)


class TestTriangleCoverage:
    def test_offscreen_returns_none(self):
        uvz = np.array([[-50.0, -50.0, 1.0], [-40.0, -50.0, 1.0], [-50.0, -40.0, 1.0]])
        assert triangle_coverage(uvz, 32, 32) is None

    def test_degenerate_returns_none(self):
        uvz = np.array([[5.0, 5.0, 1.0], [9.0, 9.0, 1.0], [13.0, 13.0, 1.0]])
        assert triangle_coverage(uvz, 32, 32) is None

    def test_barycentric_sums_to_one(self):
        uvz = np.array([[2.0, 3.0, 1.0], [20.0, 4.0, 2.0], [5.0, 25.0, 3.0]])
        xs, ys, depth, bary = triangle_coverage(uvz, 32, 32)
        np.testing.assert_allclose(bary.sum(axis=1), 1.0, atol=1e-12)
        assert (depth > 0).all()
