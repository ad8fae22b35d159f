"""Multi-view texture mapping for triangle meshes.

Pipeline: per-view z-buffer visibility, per-(face, view) quality scoring
(projected area x color consistency), MRF view selection solved by min-sum
loopy belief propagation with top-N candidate extraction, distance-
transform weighted multi-view blending, atlas packing/export, and a
PSNR / MS-SSIM re-rendering evaluation protocol.
"""

__version__ = "0.1.0"

from .errors import ConsistencyError, InputError, TexmapError
from .mesh import AdjacencyGraph, Mesh, build_adjacency, load_mesh
from .camera import PinholeCamera, ViewImage, load_views
from .pipeline import PipelineConfig, run_evaluate, run_texture

__all__ = [
    "AdjacencyGraph",
    "ConsistencyError",
    "InputError",
    "Mesh",
    "PinholeCamera",
    "PipelineConfig",
    "TexmapError",
    "ViewImage",
    "build_adjacency",
    "load_mesh",
    "load_views",
    "run_evaluate",
    "run_texture",
]
