"""End-to-end pipeline: visibility -> quality -> MRF -> blend -> atlas,
plus the evaluation entry point and run configuration.

Stages run sequentially with per-stage timing; intra-stage parallelism is
controlled by ``workers`` and never changes results. Errors carry the stage
name they occurred in.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, asdict, fields, replace
from pathlib import Path

import numpy as np
from PIL import Image

from . import atlas as atlas_mod
from . import blend as blend_mod
from . import mrf as mrf_mod
from .camera import load_views
from .errors import TexmapError, InputError
from .evaluation import EvalReport, evaluate_dataset
from .mesh import build_adjacency, load_mesh
from .parallel import parallel_map
from .quality import compute_quality_table
from .visibility import rasterize_all_views

logger = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    """Tunable parameters of the texture pipeline, echoed into run reports."""

    top_n: int = 3
    lbp_iters: int = 50
    smoothness: float = 0.5
    ratio: float = 0.4
    meanshift_threshold: float = 0.006
    meanshift_iters: int = 10
    depth_bias: float = 1e-3
    workers: int = 0  # 0 = machine core count
    texel_min: int = 4
    texel_max: int = 256
    dump_depth: str | None = None
    dump_quality: str | None = None
    dump_labels: str | None = None
    dump_dist: str | None = None
    cache: str | None = None

    def __post_init__(self):
        if self.workers <= 0:
            self.workers = os.cpu_count() or 1
        if self.top_n < 1:
            raise InputError("top_n must be >= 1")
        if not 0.0 <= self.ratio <= 1.0:
            raise InputError("ratio must be in [0, 1]")
        if self.smoothness < 0:
            raise InputError("lambda (smoothness) must be >= 0")
        if self.lbp_iters < 1:
            raise InputError("lbp_iters must be >= 1")
        if self.depth_bias < 0:
            raise InputError("depth_bias must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def config_from_file(path, base: PipelineConfig | None = None) -> PipelineConfig:
    """Parse a key=value config file (one pair per line, # comments)."""
    base = base or PipelineConfig()
    valid = {f.name for f in fields(PipelineConfig)}
    updates = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in valid:
            raise InputError(f"{path}:{lineno}: unknown option {key!r}")
        value = value.strip("\"'")
        if value.lower() in ("true", "false"):
            parsed = value.lower() == "true"
        elif value.lower() in ("none", ""):
            parsed = None
        else:
            try:
                parsed = int(value)
            except ValueError:
                try:
                    parsed = float(value)
                except ValueError:
                    parsed = value
        updates[key] = parsed
    return replace(base, **updates)


class StageError(TexmapError):
    """Error attributed to a pipeline stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r}: {cause}")
        self.stage = stage
        self.cause = cause


class _Stages:
    def __init__(self):
        self.timings = {}
        self.current = None

    def run(self, name: str, fn):
        self.current = name
        start = time.perf_counter()
        try:
            result = fn()
        except TexmapError as exc:
            raise StageError(name, exc) from exc
        self.timings[name] = time.perf_counter() - start
        logger.info("stage %-10s %.2fs", name, self.timings[name])
        return result


def _file_digest(h, path):
    h.update(Path(path).read_bytes())


def _selection_cache_key(mesh_path, manifest_path, views, config: PipelineConfig) -> str:
    h = hashlib.sha256()
    _file_digest(h, mesh_path)
    _file_digest(h, manifest_path)
    for v in views:
        h.update(np.ascontiguousarray(v.pixels).data)
    relevant = (
        config.top_n, config.lbp_iters, config.smoothness, config.ratio,
        config.meanshift_threshold, config.meanshift_iters, config.depth_bias,
    )
    h.update(repr(relevant).encode())
    return h.hexdigest()


def _save_selection(path: Path, candidates, best_area):
    ids = np.concatenate([np.asarray(v, dtype=np.int64) for v in candidates.view_ids])
    costs = np.concatenate([np.asarray(c) for c in candidates.costs])
    lengths = np.array([len(v) for v in candidates.view_ids], dtype=np.int64)
    np.savez_compressed(path, ids=ids, costs=costs, lengths=lengths, best_area=best_area)


def _load_selection(path: Path):
    data = np.load(path)
    lengths = data["lengths"]
    offsets = np.concatenate([[0], np.cumsum(lengths)])
    view_ids = [data["ids"][offsets[i] : offsets[i + 1]] for i in range(len(lengths))]
    costs = [data["costs"][offsets[i] : offsets[i + 1]] for i in range(len(lengths))]
    return mrf_mod.CandidateSet(view_ids=view_ids, costs=costs), data["best_area"]


def _dump_depth_pngs(depth_buffers, views, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for view, buf in zip(views, depth_buffers):
        finite = np.isfinite(buf.depth)
        img = np.zeros(buf.depth.shape, dtype=np.uint16)
        if finite.any():
            lo = buf.depth[finite].min()
            hi = buf.depth[finite].max()
            span = hi - lo if hi > lo else 1.0
            img[finite] = np.rint((buf.depth[finite] - lo) / span * 65535).astype(np.uint16)
        Image.fromarray(img, mode="I;16").save(out_dir / f"depth_{view.id:04d}.png")


def _dump_dist_pngs(masks, dists, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for vm, dm in zip(masks, dists):
        hi = dm.dist.max()
        span = hi if hi > 0 else 1.0
        img = np.rint(dm.dist / span * 65535).astype(np.uint16)
        Image.fromarray(img, mode="I;16").save(out_dir / f"dist_{vm.view_id:04d}.png")


def _dump_quality_csv(qt, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("face_id,view_id,S,omega,Q\n")
        for fq in qt.faces:
            if fq is None:
                continue
            for vid, s, om, q in zip(fq.view_ids, fq.area, fq.omega, fq.q):
                fh.write(f"{fq.face_id},{vid},{s!r},{om!r},{q!r}\n")


def _dump_labels_csv(candidates, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("face_id,rank,view_id,cost\n")
        for fid in range(candidates.num_faces):
            for rank, (vid, cost) in enumerate(
                zip(candidates.view_ids[fid], candidates.costs[fid])
            ):
                fh.write(f"{fid},{rank},{vid},{cost!r}\n")


def run_texture(
    mesh_path,
    manifest_path,
    out_dir,
    config: PipelineConfig | None = None,
    image_root=None,
    drop_degenerate: bool = False,
    weld_eps: float | None = None,
):
    """Texture a mesh from posed views and export the result.

    Returns:
        (TexturedModel, report dict). The report records per-stage wall
        times, candidate statistics, the untextured-face count and the full
        configuration echo, and is also written to out_dir/report.json.
    """
    config = config or PipelineConfig()
    out_dir = Path(out_dir)
    stages = _Stages()

    def load_geometry():
        m = load_mesh(mesh_path, drop_degenerate=drop_degenerate, weld_eps=weld_eps)
        return m, build_adjacency(m)

    mesh, graph = stages.run("mesh", load_geometry)
    views = stages.run("camera", lambda: load_views(manifest_path, image_root))

    candidates = None
    cache_path = None
    if config.cache:
        key = _selection_cache_key(mesh_path, manifest_path, views, config)
        cache_dir = Path(config.cache)
        cache_dir.mkdir(parents=True, exist_ok=True)
        cache_path = cache_dir / f"selection_{key}.npz"
        if cache_path.exists():
            logger.info("cache hit: %s", cache_path.name)
            candidates, best_area = _load_selection(cache_path)

    depth_buffers = stages.run(
        "visibility", lambda: rasterize_all_views(mesh, views, config.workers)
    )
    if config.dump_depth:
        _dump_depth_pngs(depth_buffers, views, config.dump_depth)

    if candidates is None:
        qt = stages.run(
            "quality",
            lambda: compute_quality_table(
                mesh,
                views,
                depth_buffers,
                bias=config.depth_bias,
                workers=config.workers,
                threshold=config.meanshift_threshold,
                max_iters=config.meanshift_iters,
            ),
        )
        if config.dump_quality:
            _dump_quality_csv(qt, config.dump_quality)

        def solve():
            costs = mrf_mod.build_data_costs(qt)
            beliefs = mrf_mod.lbp_solve(
                graph, costs, smoothness=config.smoothness, iters=config.lbp_iters
            )
            return mrf_mod.extract_top_n(beliefs, config.top_n, config.ratio), beliefs

        (candidates, beliefs) = stages.run("mrf", solve)
        lbp_iterations = beliefs.iterations
        # best retained view's S per face, for texel resolution
        best_area = np.zeros(mesh.num_faces)
        for fid in range(mesh.num_faces):
            fq = qt.faces[fid]
            if fq is None or len(candidates.view_ids[fid]) == 0:
                continue
            retained = np.isin(fq.view_ids, candidates.view_ids[fid])
            best_area[fid] = fq.area[retained].max()
        if cache_path is not None:
            _save_selection(cache_path, candidates, best_area)
            logger.info("cached selection: %s", cache_path.name)
    else:
        stages.timings["quality"] = 0.0
        stages.timings["mrf"] = 0.0
        lbp_iterations = 0

    if config.dump_labels:
        _dump_labels_csv(candidates, config.dump_labels)

    views_by_id = {v.id: v for v in views}

    def do_blend():
        masks = blend_mod.build_masks(
            mesh, views, depth_buffers, candidates, config.depth_bias, config.workers
        )
        dists = parallel_map(
            lambda vm: blend_mod.distance_transform(vm.mask), masks, config.workers
        )
        if config.dump_dist:
            _dump_dist_pngs(masks, dists, config.dump_dist)
        dist_by_id = {vm.view_id: dm for vm, dm in zip(masks, dists)}

        def make_patch(fid):
            if len(candidates.view_ids[fid]) == 0:
                return None
            res = blend_mod.texel_resolution(
                best_area[fid], config.texel_min, config.texel_max
            )
            return blend_mod.blend_face(
                mesh, fid, candidates.view_ids[fid], views_by_id, dist_by_id, res
            )

        patches = parallel_map(make_patch, range(mesh.num_faces), config.workers)
        return [p for p in patches if p is not None]

    patches = stages.run("blend", do_blend)

    def do_atlas():
        atl = atlas_mod.pack(patches, mesh.num_faces)
        files = atlas_mod.export(mesh, atl, out_dir)
        return atlas_mod.TexturedModel(mesh=mesh, atlas=atl), files

    model, files = stages.run("atlas", do_atlas)

    n_candidates = [len(v) for v in candidates.view_ids]
    untextured = int(sum(1 for n in n_candidates if n == 0))
    report = {
        "stages_seconds": stages.timings,
        "config": config.to_dict(),
        "mesh_faces": mesh.num_faces,
        "views": len(views),
        "adjacency_edges": int(graph.num_edges),
        "untextured_faces": untextured,
        "max_candidates": int(max(n_candidates)) if n_candidates else 0,
        "mean_candidates": float(np.mean([n for n in n_candidates if n > 0] or [0])),
        "lbp_iterations": int(lbp_iterations),
        "atlas_pages": len(model.atlas.pages),
        "atlas_side": int(model.atlas.pages[0].shape[0]),
        "outputs": {k: str(v) if not isinstance(v, list) else [str(x) for x in v]
                    for k, v in files.items()},
    }
    if untextured:
        logger.warning("%d faces left untextured (gray)", untextured)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
    return model, report


def run_evaluate(
    model_path,
    manifest_path,
    report_path=None,
    config: PipelineConfig | None = None,
    image_root=None,
) -> EvalReport:
    """Evaluate an exported textured model against its input views."""
    config = config or PipelineConfig()
    stages = _Stages()
    model = stages.run("atlas", lambda: atlas_mod.load_textured_model(model_path))
    views = stages.run("camera", lambda: load_views(manifest_path, image_root))
    try:
        report = evaluate_dataset(model, views, workers=config.workers)
    except ValueError as exc:
        raise StageError("eval", InputError(str(exc))) from exc
    if report_path is not None:
        Path(report_path).parent.mkdir(parents=True, exist_ok=True)
        Path(report_path).write_text(
            json.dumps(report.to_dict(), indent=2), encoding="utf-8"
        )
    return report
