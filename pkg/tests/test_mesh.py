import numpy as np
import pytest

from texmap.errors import InputError
from texmap.mesh import build_adjacency, load_mesh

from conftest import brute_force_adjacency


def write_obj(tmp_path, text, name="mesh.obj"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadMesh:
    def test_single_triangle_normal(self, tmp_path):
        path = write_obj(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        mesh = load_mesh(path)
        assert mesh.num_faces == 1
        np.testing.assert_allclose(mesh.face_normals[0], [0.0, 0.0, 1.0])

    def test_quad_fan_triangulation(self, tmp_path):
        path = write_obj(tmp_path, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        mesh = load_mesh(path)
        assert mesh.faces.tolist() == [[0, 1, 2], [0, 2, 3]]

    def test_cube_faces_and_edges(self, cube_obj):
        mesh = load_mesh(cube_obj)
        assert mesh.num_faces == 12
        graph = build_adjacency(mesh)
        oracle = brute_force_adjacency(mesh.faces)
        assert len(oracle) == 18
        assert set(map(tuple, graph.edges.tolist())) == oracle

    def test_face_index_formats(self, tmp_path):
        path = write_obj(
            tmp_path,
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf 1/1 2/2 3/3\n",
        )
        assert load_mesh(path).num_faces == 1

    def test_parse_error_has_line_number(self, tmp_path):
        path = write_obj(tmp_path, "v 0 0 0\nv 1 0 zz\n")
        with pytest.raises(InputError, match=":2"):
            load_mesh(path)

    def test_out_of_range_face_index(self, tmp_path):
        path = write_obj(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
        with pytest.raises(InputError, match="exceeds vertex count"):
            load_mesh(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="not found"):
            load_mesh(tmp_path / "nope.obj")

    def test_degenerate_face_fatal_lists_ids(self, tmp_path):
        path = write_obj(
            tmp_path,
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\nf 1 2 3\nf 1 2 4\nf 1 2 2\n",
        )
        with pytest.raises(InputError, match=r"\[1, 2\]"):
            load_mesh(path)

    def test_degenerate_face_dropped_with_flag(self, tmp_path, caplog):
        path = write_obj(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nf 1 1 2\n")
        mesh = load_mesh(path, drop_degenerate=True)
        assert mesh.num_faces == 1

    def test_normals_unit_length(self, cube_obj):
        mesh = load_mesh(cube_obj)
        norms = np.linalg.norm(mesh.face_normals, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-9)

    def test_ply_roundtrip(self, tmp_path):
        ply = (
            "ply\nformat ascii 1.0\n"
            "element vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
            "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
            "0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"
        )
        path = tmp_path / "tri.ply"
        path.write_text(ply)
        mesh = load_mesh(path)
        assert mesh.num_faces == 1
        np.testing.assert_allclose(mesh.face_normals[0], [0, 0, 1])

    def test_ply_quad_fan(self, tmp_path):
        ply = (
            "ply\nformat ascii 1.0\n"
            "element vertex 4\nproperty float x\nproperty float y\nproperty float z\n"
            "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
            "0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n"
        )
        mesh = load_mesh(write_obj(tmp_path, ply, "quad.ply"))
        assert mesh.faces.tolist() == [[0, 1, 2], [0, 2, 3]]

    def test_weld_restores_adjacency(self, tmp_path):
        # two triangles sharing an edge, but with duplicated vertices
        text = (
            "v 0 0 0\nv 1 0 0\nv 0 1 0\n"
            "v 1 0 0\nv 1 1 0\nv 0 1 0\n"
            "f 1 2 3\nf 4 5 6\n"
        )
        path = write_obj(tmp_path, text)
        assert build_adjacency(load_mesh(path)).num_edges == 0
        welded = load_mesh(path, weld_eps=1e-9)
        assert len(welded.vertices) == 4
        assert build_adjacency(welded).num_edges == 1


class TestAdjacency:
    def test_single_face_no_edges(self, tmp_path):
        mesh = load_mesh(write_obj(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"))
        graph = build_adjacency(mesh)
        assert graph.num_edges == 0
        assert all(len(n) == 0 for n in graph.neighbors)

    def test_two_triangles_one_edge(self, tmp_path):
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3\nf 2 4 3\n"
        graph = build_adjacency(load_mesh(write_obj(tmp_path, text)))
        assert graph.num_edges == 1
        assert graph.edges.tolist() == [[0, 1]]

    def test_symmetric_neighbor_lists(self, cube_obj):
        mesh = load_mesh(cube_obj)
        graph = build_adjacency(mesh)
        for i, neigh in enumerate(graph.neighbors):
            for j in neigh:
                assert i in graph.neighbors[j]
                assert i != j

    def test_closed_manifold_edge_count(self, cube_obj):
        # closed 2-manifold: E = 1.5 F
        mesh = load_mesh(cube_obj)
        graph = build_adjacency(mesh)
        assert graph.num_edges == 1.5 * mesh.num_faces

    def test_icosphere_manifold_edge_count(self):
        from texmap.synth import make_icosphere

        mesh = make_icosphere(2)
        graph = build_adjacency(mesh)
        assert graph.num_edges == 1.5 * mesh.num_faces
        assert set(map(tuple, graph.edges.tolist())) == brute_force_adjacency(mesh.faces)

    def test_nonmanifold_edge_all_pairs(self, tmp_path):
        # three triangles share the same edge -> all three pairs adjacent
        text = (
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 -1 0\nv 0 0 1\n"
            "f 1 2 3\nf 1 2 4\nf 1 2 5\n"
        )
        graph = build_adjacency(load_mesh(write_obj(tmp_path, text)))
        assert graph.num_edges == 3
        assert max(len(n) for n in graph.neighbors) == 2
