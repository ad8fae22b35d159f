"""Triangle mesh loading, validation and face adjacency.

Supports the OBJ subset (v, vt, f; 1-based indices; polygon faces are
fan-triangulated) and ASCII PLY. Adjacency is defined on shared vertex-index
pairs, so duplicated vertices break adjacency unless welded first.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError

logger = logging.getLogger(__name__)

# Squared parallelogram area below which a face counts as degenerate.
DEGENERATE_AREA_SQ = 1e-12


@dataclass(frozen=True)
class Mesh:
    """Indexed triangle mesh with per-face unit normals.

    Attributes:
        vertices: (V, 3) float64 points in model units.
        faces: (F, 3) int32 vertex-index triples.
        face_normals: (F, 3) float64 unit normals, winding (v1-v0)x(v2-v0).
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_normals: np.ndarray

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def face_points(self, face_id: int) -> np.ndarray:
        """Corner coordinates of one face, shape (3, 3)."""
        return self.vertices[self.faces[face_id]]

    def centroids(self) -> np.ndarray:
        """Per-face centroids, shape (F, 3)."""
        return self.vertices[self.faces].mean(axis=1)


@dataclass(frozen=True)
class AdjacencyGraph:
    """Face-adjacency graph: faces sharing exactly one mesh edge.

    Attributes:
        edges: (E, 2) int32 face-index pairs with edges[:, 0] < edges[:, 1],
            lexicographically sorted.
        neighbors: tuple of sorted int32 arrays, one per face.
    """

    edges: np.ndarray
    neighbors: tuple

    @property
    def num_edges(self) -> int:
        return len(self.edges)


def _triangulate_fan(poly: list) -> list:
    """Fan-triangulate a polygon index list: (v0, vi, vi+1)."""
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def _parse_obj(path: Path):
    vertices = []
    faces = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise InputError(f"{path}:{lineno}: vertex needs 3 coordinates")
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError as exc:
                    raise InputError(f"{path}:{lineno}: bad vertex coordinate: {exc}") from None
            elif tag == "f":
                if len(parts) < 4:
                    raise InputError(f"{path}:{lineno}: face needs at least 3 vertices")
                poly = []
                for tok in parts[1:]:
                    # accept v, v/vt, v//vn, v/vt/vn
                    head = tok.split("/")[0]
                    try:
                        idx = int(head)
                    except ValueError:
                        raise InputError(f"{path}:{lineno}: bad face index {tok!r}") from None
                    if idx < 1:
                        raise InputError(f"{path}:{lineno}: face index must be >= 1, got {idx}")
                    poly.append(idx - 1)
                faces.extend(_triangulate_fan(poly))
            # vt, vn, mtllib, usemtl, o, g, s: ignored on input
    return vertices, faces


def _parse_ply(path: Path):
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise InputError(f"{path}:1: not a PLY file")

    n_vert = n_face = 0
    vert_props = []
    current = None
    body_start = None
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            if parts[1] != "ascii":
                raise InputError(f"{path}:{i}: only ASCII PLY is supported")
        elif parts[0] == "element":
            current = parts[1]
            if current == "vertex":
                n_vert = int(parts[2])
            elif current == "face":
                n_face = int(parts[2])
        elif parts[0] == "property" and current == "vertex":
            vert_props.append(parts[-1])
        elif parts[0] == "end_header":
            body_start = i
            break
    if body_start is None:
        raise InputError(f"{path}: missing end_header")
    try:
        ix, iy, iz = vert_props.index("x"), vert_props.index("y"), vert_props.index("z")
    except ValueError:
        raise InputError(f"{path}: vertex element lacks x/y/z properties") from None

    vertices = []
    faces = []
    lineno = body_start
    rows = lines[body_start:]
    if len(rows) < n_vert + n_face:
        raise InputError(f"{path}: truncated body, expected {n_vert + n_face} rows")
    for k in range(n_vert):
        lineno += 1
        parts = rows[k].split()
        try:
            vertices.append([float(parts[ix]), float(parts[iy]), float(parts[iz])])
        except (ValueError, IndexError):
            raise InputError(f"{path}:{lineno}: bad vertex row") from None
    for k in range(n_face):
        lineno += 1
        parts = rows[n_vert + k].split()
        try:
            cnt = int(parts[0])
            poly = [int(p) for p in parts[1 : 1 + cnt]]
        except (ValueError, IndexError):
            raise InputError(f"{path}:{lineno}: bad face row") from None
        if cnt < 3 or len(poly) != cnt:
            raise InputError(f"{path}:{lineno}: face needs at least 3 indices")
        faces.extend(_triangulate_fan(poly))
    return vertices, faces


def _weld(vertices: np.ndarray, faces: np.ndarray, eps: float):
    """Merge vertices falling into the same eps-sized grid cell.

    Cell-based, not pairwise: duplicates and near-duplicates within a cell
    collapse to the first occurrence; borderline pairs straddling a cell
    boundary stay distinct.
    """
    keys = np.round(vertices / eps).astype(np.int64)
    seen = {}
    remap = np.empty(len(vertices), dtype=np.int64)
    keep = []
    for i, key in enumerate(map(tuple, keys)):
        if key in seen:
            remap[i] = seen[key]
        else:
            seen[key] = len(keep)
            remap[i] = len(keep)
            keep.append(i)
    merged = len(vertices) - len(keep)
    if merged:
        logger.info("weld: merged %d duplicate vertices (eps=%g)", merged, eps)
    return vertices[keep], remap[faces]


def load_mesh(path, drop_degenerate: bool = False, weld_eps: float | None = None) -> Mesh:
    """Load a triangle mesh from OBJ or ASCII PLY.

    Polygon faces are fan-triangulated. Face normals are the normalized
    cross product (v1-v0)x(v2-v0).

    Args:
        path: Input file; format chosen by extension (.ply -> PLY, else OBJ).
        drop_degenerate: Drop degenerate faces with a warning instead of
            raising.
        weld_eps: If set, merge vertices within this distance before
            validation.

    Returns:
        Validated Mesh.

    Raises:
        InputError: On parse errors (with line number), out-of-range face
            indices, or degenerate faces when drop_degenerate is False.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"mesh file not found: {path}")
    if path.suffix.lower() == ".ply":
        vertices, faces = _parse_ply(path)
    else:
        vertices, faces = _parse_obj(path)
    if not vertices:
        raise InputError(f"{path}: no vertices")
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)

    if faces.size and faces.max() >= len(vertices):
        bad = int(faces.max()) + 1
        raise InputError(f"{path}: face index {bad} exceeds vertex count {len(vertices)}")

    if weld_eps is not None and weld_eps > 0:
        vertices, faces = _weld(vertices, faces, weld_eps)

    # Degenerate = repeated vertex index or (near-)collinear corners.
    if faces.size:
        repeated = (
            (faces[:, 0] == faces[:, 1])
            | (faces[:, 1] == faces[:, 2])
            | (faces[:, 0] == faces[:, 2])
        )
        tri = vertices[faces]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        area_sq = np.einsum("ij,ij->i", cross, cross)
        degenerate = repeated | (area_sq <= DEGENERATE_AREA_SQ)
        if degenerate.any():
            bad_ids = np.nonzero(degenerate)[0]
            if not drop_degenerate:
                raise InputError(
                    f"{path}: degenerate faces at indices {bad_ids.tolist()} "
                    "(use --drop-degenerate to drop them)"
                )
            logger.warning("%s: dropping %d degenerate faces", path, len(bad_ids))
            keepers = ~degenerate
            faces = faces[keepers]
            cross = cross[keepers]
            area_sq = area_sq[keepers]
        normals = cross / np.sqrt(area_sq)[:, None]
    else:
        normals = np.zeros((0, 3), dtype=np.float64)

    return Mesh(
        vertices=vertices,
        faces=faces.astype(np.int32),
        face_normals=normals,
    )


def build_adjacency(mesh: Mesh) -> AdjacencyGraph:
    """Build the face-adjacency graph over shared mesh edges.

    Faces are adjacent iff they share exactly two vertex indices. Edges
    shared by more than two faces (non-manifold) contribute all pairwise
    combinations.
    """
    edge_faces = {}
    for fid, (a, b, c) in enumerate(np.asarray(mesh.faces)):
        for u, v in ((a, b), (b, c), (a, c)):
            key = (u, v) if u < v else (v, u)
            edge_faces.setdefault(key, []).append(fid)

    pairs = set()
    for fids in edge_faces.values():
        if len(fids) < 2:
            continue
        for i in range(len(fids)):
            for j in range(i + 1, len(fids)):
                pairs.add((fids[i], fids[j]))

    n = mesh.num_faces
    neighbor_sets = [set() for _ in range(n)]
    for i, j in pairs:
        neighbor_sets[i].add(j)
        neighbor_sets[j].add(i)

    if pairs:
        edges = np.array(sorted(pairs), dtype=np.int32)
    else:
        edges = np.zeros((0, 2), dtype=np.int32)
    neighbors = tuple(np.array(sorted(s), dtype=np.int32) for s in neighbor_sets)
    return AdjacencyGraph(edges=edges, neighbors=neighbors)
