"""Synthetic scenes with known ground truth for testing and acceptance.

Generates a procedurally textured shape, a set of posed cameras, their
ground-truth renders (same rasterizer as the pipeline) and a view manifest
consumable by the main pipeline. Photometric perturbations (per-view gain
and bias) are applied after rendering so the geometry stays exact; pose
jitter perturbs only the manifest cameras, leaving the rendered images at
the true poses.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from PIL import Image

from .camera import PinholeCamera, ViewImage
from .errors import InputError
from .mesh import Mesh
from .parallel import parallel_map
from .visibility import rasterize_depth, triangle_coverage, _rasterizable_faces

logger = logging.getLogger(__name__)

PATTERN_INSET = 1e-4

AXIS_DIRECTIONS = np.array(
    [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ]
)


@dataclass
class SceneSpec:
    """Parameters of one synthetic scene.

    layout "ring" places cameras on a circle of the given radius and
    elevation looking at the origin; "axes" uses the six axis-aligned
    directions (count <= 6), which guarantees full coverage of a cube.
    gains/biases are per view (broadcast when a single value is given).
    """

    shape: str = "cube"  # cube | icosphere | plane-grid
    subdiv: int = 2
    grid_n: int = 8
    extent: float = 1.0
    pattern: str = "checkerboard"  # checkerboard | gradient | uv-debug | uniform
    cells: int = 8
    cameras: int = 6
    layout: str = "axes"
    radius: float = 2.0
    elevation_deg: float = 30.0
    image_size: int = 512
    focal: float | None = None
    gains: tuple = (1.0,)
    biases: tuple = (0.0,)
    jitter_rot_deg: float = 0.0
    jitter_trans_frac: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.cameras < 1:
            raise InputError("at least one camera required")
        if any(g <= 0 for g in np.atleast_1d(self.gains)):
            raise InputError("gains must be positive")
        if self.jitter_rot_deg < 0 or self.jitter_trans_frac < 0:
            raise InputError("jitter must be >= 0")
        if self.layout == "axes" and self.cameras > 6:
            raise InputError("axes layout supports at most 6 cameras")


def make_cube(side: float = 1.0) -> Mesh:
    """Axis-aligned cube centered at the origin, outward normals."""
    s = side / 2.0
    v = np.array(
        [
            [-s, -s, -s],
            [s, -s, -s],
            [s, s, -s],
            [-s, s, -s],
            [-s, -s, s],
            [s, -s, s],
            [s, s, s],
            [-s, s, s],
        ]
    )
    quads = [
        (1, 2, 6, 5),  # +x
        (3, 0, 4, 7),  # -x
        (2, 3, 7, 6),  # +y
        (0, 1, 5, 4),  # -y
        (4, 5, 6, 7),  # +z
        (3, 2, 1, 0),  # -z
    ]
    faces = []
    for a, b, c, d in quads:
        # right-angle corner first: texel axes align with the face sides
        faces.append((b, c, a))
        faces.append((d, a, c))
    return _mesh_from_arrays(v, np.asarray(faces))


def make_icosphere(subdiv: int = 2, radius: float = 0.5) -> Mesh:
    """Icosahedron subdivided ``subdiv`` times, projected onto a sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts / np.linalg.norm(verts[0])]
    for _ in range(subdiv):
        cache = {}
        index = {v: i for i, v in enumerate(verts)}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key in cache:
                return cache[key]
            m = np.asarray(verts[i]) + np.asarray(verts[j])
            m = tuple(m / np.linalg.norm(m))
            if m not in index:
                index[m] = len(verts)
                verts.append(m)
            cache[key] = index[m]
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.asarray(verts) * radius
    return _mesh_from_arrays(v, np.asarray(faces))


def make_plane_grid(n: int = 8, size: float = 1.0, z: float = 0.0) -> Mesh:
    """n x n cell grid in the XY plane centered at the origin, normals +z."""
    xs = np.linspace(-size / 2.0, size / 2.0, n + 1)
    vv, uu = np.meshgrid(xs, xs, indexing="ij")
    verts = np.stack([uu.ravel(), vv.ravel(), np.full((n + 1) ** 2, z)], axis=1)
    faces = []
    for r in range(n):
        for c in range(n):
            a = r * (n + 1) + c
            b = a + 1
            d = a + (n + 1)
            e = d + 1
            faces.append((a, b, e))
            faces.append((a, e, d))
    return _mesh_from_arrays(verts, np.asarray(faces))


def _mesh_from_arrays(vertices: np.ndarray, faces: np.ndarray) -> Mesh:
    tri = vertices[faces]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    normals = cross / np.linalg.norm(cross, axis=1)[:, None]
    return Mesh(
        vertices=np.asarray(vertices, dtype=np.float64),
        faces=np.asarray(faces, dtype=np.int32),
        face_normals=normals,
    )


def make_pattern(name: str, extent: float = 1.0, cells: int = 8):
    """Procedural surface color: (points (N, 3), face_ids (N,)) -> (N, 3)."""
    if name == "checkerboard":
        cell = extent / cells

        def checker(points, face_ids):
            parity = np.floor((points + extent / 2.0) / cell).sum(axis=1).astype(np.int64) % 2
            return np.where(parity[:, None] == 0, 230.0, 25.0) * np.ones((1, 3))

        return checker
    if name == "gradient":

        def gradient(points, face_ids):
            t = np.clip((points + extent / 2.0) / extent, 0.0, 1.0)
            return t * 255.0

        return gradient
    if name == "uv-debug":

        def uv_debug(points, face_ids):
            rgb = np.empty((len(points), 3))
            rgb[:, 0] = (face_ids * 37) % 256
            rgb[:, 1] = (face_ids * 101 + 61) % 256
            rgb[:, 2] = (face_ids * 197 + 122) % 256
            return rgb

        return uv_debug
    if name == "uniform":
        return lambda points, face_ids: np.full((len(points), 3), 128.0)
    raise InputError(f"unknown texture pattern {name!r}")


def look_at_camera(
    eye,
    target,
    fx: float,
    width: int,
    height: int,
    up=(0.0, 0.0, 1.0),
    fy: float | None = None,
) -> PinholeCamera:
    """Pinhole camera at ``eye`` looking at ``target`` (y-down convention)."""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z = z / np.linalg.norm(z)
    up = np.asarray(up, dtype=np.float64)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-8:
        x = np.cross(z, np.array([0.0, 1.0, 0.0]))
    if np.linalg.norm(x) < 1e-8:
        x = np.cross(z, np.array([1.0, 0.0, 0.0]))
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    return PinholeCamera(
        fx=fx,
        fy=fy if fy is not None else fx,
        cx=(width - 1) / 2.0,
        cy=(height - 1) / 2.0,
        R=R,
        t=-R @ eye,
        width=width,
        height=height,
    )


def scene_cameras(spec: SceneSpec) -> list:
    """Camera ring or axis-aligned set looking at the origin."""
    size = spec.image_size
    if spec.focal is not None:
        fx = spec.focal
    else:
        # near face of the object spans half the image width
        fx = 0.5 * size * (spec.radius - spec.extent / 2.0) / spec.extent
    cams = []
    if spec.layout == "axes":
        for d in AXIS_DIRECTIONS[: spec.cameras]:
            cams.append(look_at_camera(d * spec.radius, (0.0, 0.0, 0.0), fx, size, size))
    elif spec.layout == "ring":
        elev = np.deg2rad(spec.elevation_deg)
        for k in range(spec.cameras):
            az = 2.0 * np.pi * k / spec.cameras
            eye = spec.radius * np.array(
                [np.cos(elev) * np.cos(az), np.cos(elev) * np.sin(az), np.sin(elev)]
            )
            cams.append(look_at_camera(eye, (0.0, 0.0, 0.0), fx, size, size))
    else:
        raise InputError(f"unknown camera layout {spec.layout!r}")
    return cams


def render_ground_truth(mesh: Mesh, camera: PinholeCamera, pattern, inset: float = PATTERN_INSET):
    """Render the procedurally textured mesh into one camera.

    Surface points are pulled ``inset`` along the inward normal before
    pattern evaluation so points on cell boundaries resolve consistently.
    """
    buf = rasterize_depth(mesh, camera)
    out = np.zeros((camera.height, camera.width, 3), dtype=np.uint8)
    covered = buf.face >= 0
    if not covered.any():
        return out
    tri_uvz, _ = _rasterizable_faces(mesh, camera)
    corners_all = mesh.vertices[mesh.faces]
    for fid in np.unique(buf.face[covered]):
        cov = triangle_coverage(tri_uvz[fid], camera.width, camera.height)
        if cov is None:
            continue
        xs, ys, _, bary = cov
        own = buf.face[ys, xs] == fid
        if not own.any():
            continue
        xs = xs[own]
        ys = ys[own]
        bw = bary[own] / tri_uvz[fid, :, 2][None, :]
        bw /= bw.sum(axis=1)[:, None]
        points = bw @ corners_all[fid]
        points = points - inset * mesh.face_normals[fid]
        colors = pattern(points, np.full(len(points), fid, dtype=np.int64))
        out[ys, xs] = np.clip(np.rint(colors), 0, 255).astype(np.uint8)
    return out


def _perturb(img: np.ndarray, gain: float, bias: float) -> np.ndarray:
    return np.clip(np.rint(img.astype(np.float64) * gain + bias), 0, 255).astype(np.uint8)


def _jitter_camera(camera: PinholeCamera, rot_deg: float, trans_frac: float, rng) -> PinholeCamera:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.deg2rad(rot_deg) * rng.uniform(-1.0, 1.0)
    k = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    rot = np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
    center = camera.center()
    new_center = center + trans_frac * np.linalg.norm(center) * rng.normal(size=3)
    R = camera.R @ rot
    return PinholeCamera(
        fx=camera.fx, fy=camera.fy, cx=camera.cx, cy=camera.cy,
        R=R, t=-R @ new_center, width=camera.width, height=camera.height,
    )


def build_scene(spec: SceneSpec):
    """SceneSpec -> (mesh, true ViewImages, manifest cameras).

    Manifest cameras equal the render cameras unless jitter is requested.
    """
    if spec.shape == "cube":
        mesh = make_cube(spec.extent)
    elif spec.shape == "icosphere":
        mesh = make_icosphere(spec.subdiv, radius=spec.extent / 2.0)
    elif spec.shape == "plane-grid":
        mesh = make_plane_grid(spec.grid_n, size=spec.extent)
    else:
        raise InputError(f"unknown shape {spec.shape!r}")

    pattern = make_pattern(spec.pattern, extent=spec.extent, cells=spec.cells)
    cameras = scene_cameras(spec)
    gains = np.resize(np.atleast_1d(spec.gains).astype(np.float64), len(cameras))
    biases = np.resize(np.atleast_1d(spec.biases).astype(np.float64), len(cameras))

    def render(idx):
        img = render_ground_truth(mesh, cameras[idx], pattern)
        return _perturb(img, gains[idx], biases[idx])

    images = parallel_map(render, range(len(cameras)), workers=1)
    views = [
        ViewImage(id=i, camera=cam, pixels=img)
        for i, (cam, img) in enumerate(zip(cameras, images))
    ]

    manifest_cams = cameras
    if spec.jitter_rot_deg > 0 or spec.jitter_trans_frac > 0:
        rng = np.random.default_rng(spec.seed)
        manifest_cams = [
            _jitter_camera(c, spec.jitter_rot_deg, spec.jitter_trans_frac, rng)
            for c in cameras
        ]
    return mesh, views, manifest_cams


def write_mesh_obj(mesh: Mesh, path) -> None:
    """Plain v/f OBJ writer with round-trip exact float formatting."""
    lines = []
    for x, y, z in mesh.vertices.tolist():
        lines.append(f"v {x!r} {y!r} {z!r}\n")
    for a, b, c in mesh.faces.tolist():
        lines.append(f"f {a + 1} {b + 1} {c + 1}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def generate(spec: SceneSpec, out_dir) -> dict:
    """Generate a full scene on disk.

    Writes mesh.obj, views.json, images/view_####.png and scene.json (the
    spec echo). Returns the paths plus per-view gain/bias actually applied.
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    mesh, views, manifest_cams = build_scene(spec)

    mesh_path = out_dir / "mesh.obj"
    write_mesh_obj(mesh, mesh_path)

    entries = []
    for view, cam in zip(views, manifest_cams):
        name = f"images/view_{view.id:04d}.png"
        Image.fromarray(view.pixels, mode="RGB").save(out_dir / name)
        entries.append(
            {
                "id": view.id,
                "image": name,
                "width": cam.width,
                "height": cam.height,
                "fx": cam.fx,
                "fy": cam.fy,
                "cx": cam.cx,
                "cy": cam.cy,
                "R": [float(x) for x in cam.R.ravel()],
                "t": [float(x) for x in cam.t],
            }
        )
    manifest_path = out_dir / "views.json"
    manifest_path.write_text(json.dumps(entries, indent=2), encoding="utf-8")

    scene_meta = asdict(spec)
    scene_meta["gains"] = np.resize(np.atleast_1d(spec.gains), len(views)).tolist()
    scene_meta["biases"] = np.resize(np.atleast_1d(spec.biases), len(views)).tolist()
    (out_dir / "scene.json").write_text(json.dumps(scene_meta, indent=2), encoding="utf-8")

    logger.info("synth scene: %d faces, %d views -> %s", mesh.num_faces, len(views), out_dir)
    return {"mesh": mesh_path, "manifest": manifest_path, "out_dir": out_dir}
