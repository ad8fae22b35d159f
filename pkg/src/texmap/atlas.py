"""Texture atlas packing and textured-mesh export/reload.

Each face's patch occupies its own axis-aligned block (patch plus a 2-texel
gutter dilated from edge texels) on a power-of-two square page; shelf
packing by decreasing block size, face id breaking ties, keeps the layout
deterministic. Untextured faces map to a designated gray block via a
degenerate (single-point) UV triangle.

OBJ vt coordinates use the usual bottom-left origin; texel centers live at
(col + 0.5) / size horizontally and 1 - (row + 0.5) / size vertically.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import InputError
from .mesh import Mesh
from .blend import FacePatch

logger = logging.getLogger(__name__)

GUTTER = 2
MAX_PAGE_SIDE = 8192
GRAY = 128
GRAY_BLOCK = 4 + 2 * GUTTER  # designated 4x4 gray block plus gutters


@dataclass
class TextureAtlas:
    """Packed atlas pages plus per-face UV assignment.

    uv is (F, 3, 2) in [0, 1] atlas coordinates (OBJ convention), page (F,)
    the page index per face, textured (F,) whether the face has its own
    patch (untextured faces point at the shared gray block).
    """

    pages: list
    uv: np.ndarray = field(repr=False)
    page: np.ndarray
    textured: np.ndarray


@dataclass
class TexturedModel:
    """A mesh plus its texture atlas; the pipeline's final output."""

    mesh: Mesh
    atlas: TextureAtlas


def _next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def _rasterize_block(patch: FacePatch) -> np.ndarray:
    """Quantize a patch into its block, dilating edge texels into the
    gutter and the empty half so bilinear lookups never read undefined
    texels."""
    r = patch.resolution
    side = r + 2 * GUTTER
    block = np.zeros((side, side, 3), dtype=np.uint8)
    filled = np.zeros((side, side), dtype=bool)
    block[GUTTER : GUTTER + r, GUTTER : GUTTER + r] = np.clip(
        np.rint(patch.rgb), 0, 255
    ).astype(np.uint8)
    filled[GUTTER : GUTTER + r, GUTTER : GUTTER + r] = patch.covered
    if not filled.all():
        ind = ndimage.distance_transform_edt(
            ~filled, return_distances=False, return_indices=True
        )
        block = block[ind[0], ind[1]]
    return block


def _shelf_pack(block_sides: list, page_side: int):
    """Shelf-pack square blocks in the given order onto pages.

    Returns:
        (placements, n_pages) where placements[i] = (page, row, col), or
        None when some block exceeds the page side.
    """
    placements = []
    page = 0
    shelf_y = 0
    shelf_h = 0
    x = 0
    for side in block_sides:
        if side > page_side:
            return None
        if x + side > page_side:
            shelf_y += shelf_h
            x = 0
            shelf_h = 0
        if shelf_y + side > page_side:
            page += 1
            shelf_y = 0
            x = 0
            shelf_h = 0
        placements.append((page, shelf_y, x))
        x += side
        shelf_h = max(shelf_h, side)
    return placements, page + 1


def pack(patches: list, num_faces: int, max_side: int = MAX_PAGE_SIDE) -> TextureAtlas:
    """Pack face patches into atlas pages and assign UVs.

    Blocks are placed in order of decreasing size (face id ascending on
    ties). The page side starts at the next power of two covering the
    largest block and doubles until everything fits on one page; if the
    maximum side is reached, additional pages are opened.

    Args:
        patches: FacePatch list with unique face ids.
        num_faces: Total mesh face count (for UV table sizing).

    Raises:
        InputError: A patch (plus gutters) exceeds the maximum page side.
    """
    uv = np.zeros((num_faces, 3, 2), dtype=np.float64)
    page_idx = np.zeros(num_faces, dtype=np.int32)
    textured = np.zeros(num_faces, dtype=bool)

    if not patches:
        pages = [np.full((4, 4, 3), GRAY, dtype=np.uint8)]
        uv[:] = 0.5
        return TextureAtlas(pages=pages, uv=uv, page=page_idx, textured=textured)

    by_face = {}
    for p in patches:
        if p.face_id in by_face:
            raise InputError(f"duplicate patch for face {p.face_id}")
        by_face[p.face_id] = p

    for p in patches:
        if p.resolution + 2 * GUTTER > max_side:
            raise InputError(
                f"face {p.face_id}: patch of {p.resolution} texels exceeds "
                f"maximum atlas side {max_side}"
            )

    need_gray = len(patches) < num_faces
    order = sorted(by_face, key=lambda fid: (-(by_face[fid].resolution), fid))
    block_sides = [by_face[fid].resolution + 2 * GUTTER for fid in order]
    if need_gray:
        order.append(-1)  # shared gray block, smallest, packs last
        block_sides.append(GRAY_BLOCK)

    side = _next_pow2(max(block_sides))
    while True:
        placed = _shelf_pack(block_sides, side)
        if placed is not None and (placed[1] == 1 or side >= max_side):
            break
        side = min(side * 2, max_side)
    placements, n_pages = placed

    pages = [np.zeros((side, side, 3), dtype=np.uint8) for _ in range(n_pages)]
    for fid, block_side, (pg, row, col) in zip(order, block_sides, placements):
        if fid == -1:
            pages[pg][row : row + block_side, col : col + block_side] = GRAY
            gray_center = (
                (col + block_side / 2.0) / side,
                1.0 - (row + block_side / 2.0) / side,
            )
            gray_page = pg
            continue
        patch = by_face[fid]
        r = patch.resolution
        pages[pg][row : row + block_side, col : col + block_side] = _rasterize_block(patch)
        # corner k of the face maps to patch barycentric (0,0), (1,0), (0,1)
        x0 = col + GUTTER - 0.5
        y0 = row + GUTTER - 0.5
        corners_px = np.array([[x0, y0], [x0 + r, y0], [x0, y0 + r]])
        uv[fid, :, 0] = (corners_px[:, 0] + 0.5) / side
        uv[fid, :, 1] = 1.0 - (corners_px[:, 1] + 0.5) / side
        page_idx[fid] = pg
        textured[fid] = True

    if need_gray:
        for fid in range(num_faces):
            if not textured[fid]:
                uv[fid, :, 0] = gray_center[0]
                uv[fid, :, 1] = gray_center[1]
                page_idx[fid] = gray_page

    return TextureAtlas(pages=pages, uv=uv, page=page_idx, textured=textured)


def export(mesh: Mesh, atlas: TextureAtlas, out_dir, basename: str = "model") -> dict:
    """Write OBJ + MTL + atlas PNGs.

    Vertex coordinates are written with shortest round-trip float
    formatting, so loading the OBJ back yields bit-identical coordinates.
    Faces keep their original order; usemtl statements switch pages inline.

    Returns:
        dict with keys obj, mtl, pages (written paths).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    obj_path = out_dir / f"{basename}.obj"
    mtl_path = out_dir / f"{basename}.mtl"

    page_names = [f"atlas_{i:04d}.png" for i in range(len(atlas.pages))]
    for name, page in zip(page_names, atlas.pages):
        Image.fromarray(page, mode="RGB").save(out_dir / name)

    with open(mtl_path, "w", encoding="utf-8") as fh:
        for i, name in enumerate(page_names):
            fh.write(f"newmtl atlas_{i:04d}\n")
            fh.write("Ka 1.0 1.0 1.0\nKd 1.0 1.0 1.0\nKs 0.0 0.0 0.0\nillum 1\n")
            fh.write(f"map_Kd {name}\n\n")

    lines = [f"mtllib {basename}.mtl\n"]
    for x, y, z in mesh.vertices.tolist():
        lines.append(f"v {x!r} {y!r} {z!r}\n")
    uv_list = atlas.uv.tolist()
    for fid in range(mesh.num_faces):
        for k in range(3):
            u, v = uv_list[fid][k]
            lines.append(f"vt {u!r} {v!r}\n")
    current_page = -1
    for fid, (a, b, c) in enumerate(mesh.faces.tolist()):
        pg = int(atlas.page[fid])
        if pg != current_page:
            lines.append(f"usemtl atlas_{pg:04d}\n")
            current_page = pg
        t = 3 * fid
        lines.append(f"f {a + 1}/{t + 1} {b + 1}/{t + 2} {c + 1}/{t + 3}\n")
    with open(obj_path, "w", encoding="utf-8") as fh:
        fh.writelines(lines)

    return {"obj": obj_path, "mtl": mtl_path, "pages": [out_dir / n for n in page_names]}


def load_textured_model(obj_path) -> TexturedModel:
    """Reload an exported textured model (OBJ + MTL + atlas pages)."""
    obj_path = Path(obj_path)
    if not obj_path.exists():
        raise InputError(f"model not found: {obj_path}")

    vertices = []
    tex_coords = []
    face_idx = []
    face_uv_idx = []
    face_mtl = []
    mtllib = None
    current_mtl = None
    with open(obj_path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "vt":
                tex_coords.append([float(parts[1]), float(parts[2])])
            elif parts[0] == "mtllib":
                mtllib = parts[1]
            elif parts[0] == "usemtl":
                current_mtl = parts[1]
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise InputError(f"{obj_path}:{lineno}: textured faces must be triangles")
                vi = []
                ti = []
                for tok in parts[1:]:
                    sub = tok.split("/")
                    vi.append(int(sub[0]) - 1)
                    if len(sub) < 2 or not sub[1]:
                        raise InputError(f"{obj_path}:{lineno}: face lacks UV index")
                    ti.append(int(sub[1]) - 1)
                face_idx.append(vi)
                face_uv_idx.append(ti)
                face_mtl.append(current_mtl)

    if mtllib is None:
        raise InputError(f"{obj_path}: missing mtllib statement")
    mtl_path = obj_path.parent / mtllib
    if not mtl_path.exists():
        raise InputError(f"material file not found: {mtl_path}")
    mtl_to_png = {}
    current = None
    for raw in mtl_path.read_text().splitlines():
        parts = raw.split()
        if not parts:
            continue
        if parts[0] == "newmtl":
            current = parts[1]
        elif parts[0] == "map_Kd" and current is not None:
            mtl_to_png[current] = parts[1]

    page_names = sorted(set(mtl_to_png.values()))
    page_of_png = {name: i for i, name in enumerate(page_names)}
    pages = []
    for name in page_names:
        png_path = obj_path.parent / name
        if not png_path.exists():
            raise InputError(f"atlas page not found: {png_path}")
        with Image.open(png_path) as im:
            pages.append(np.asarray(im.convert("RGB"), dtype=np.uint8))

    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(face_idx, dtype=np.int64).reshape(-1, 3)
    tri = vertices[faces]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    norms = np.sqrt(np.einsum("ij,ij->i", cross, cross))
    normals = cross / np.where(norms > 0, norms, 1.0)[:, None]
    mesh = Mesh(vertices=vertices, faces=faces.astype(np.int32), face_normals=normals)

    tex_coords = np.asarray(tex_coords, dtype=np.float64)
    uv = tex_coords[np.asarray(face_uv_idx, dtype=np.int64)]
    page = np.array(
        [page_of_png[mtl_to_png[m]] if m in mtl_to_png else 0 for m in face_mtl],
        dtype=np.int32,
    )
    # a degenerate (single-point) UV triangle marks an untextured face
    textured = ~np.all(np.ptp(uv, axis=1) == 0.0, axis=1)
    atlas = TextureAtlas(pages=pages, uv=uv, page=page, textured=textured)
    return TexturedModel(mesh=mesh, atlas=atlas)
