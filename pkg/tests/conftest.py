import numpy as np
import pytest

from texmap.camera import PinholeCamera, ViewImage


CUBE_OBJ = """\
# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 4 3 2
f 5 6 7 8
f 1 2 6 5
f 2 3 7 6
f 3 4 8 7
f 4 1 5 8
"""


@pytest.fixture
def cube_obj(tmp_path):
    path = tmp_path / "cube.obj"
    path.write_text(CUBE_OBJ)
    return path


def identity_camera(fx=100.0, cx=50.0, width=100, height=100):
    return PinholeCamera(
        fx=fx, fy=fx, cx=cx, cy=cx, R=np.eye(3), t=np.zeros(3),
        width=width, height=height,
    )


def make_view(camera, pixels=None, view_id=0):
    if pixels is None:
        pixels = np.full((camera.height, camera.width, 3), 128, dtype=np.uint8)
    return ViewImage(id=view_id, camera=camera, pixels=pixels)


@pytest.fixture
def front_camera():
    return identity_camera()


def brute_force_adjacency(faces):
    """Oracle: all face pairs sharing exactly two vertex indices."""
    faces = np.asarray(faces)
    pairs = set()
    for i in range(len(faces)):
        for j in range(i + 1, len(faces)):
            shared = len(set(faces[i].tolist()) & set(faces[j].tolist()))
            if shared == 2:
                pairs.add((i, j))
    return pairs
