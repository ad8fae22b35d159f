"""Command-line interface.

Subcommands: texture (run the pipeline), evaluate (score a textured model
against its input views), synth (generate a synthetic test scene), inspect
(dump per-face quality and candidate CSVs without exporting textures).

Exit codes: 0 success, 1 input error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

from .errors import InputError, TexmapError
from .pipeline import PipelineConfig, config_from_file, run_evaluate, run_texture

logger = logging.getLogger("texmap")


class _Parser(argparse.ArgumentParser):
    # usage problems are input errors (exit 1), not internal errors
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(message)


def _add_pipeline_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value config file, overridden by flags")
    p.add_argument("--top-n", type=int, dest="top_n", help="views blended per face (default 3)")
    p.add_argument("--lbp-iters", type=int, dest="lbp_iters", help="LBP passes (default 50)")
    p.add_argument("--lambda", type=float, dest="smoothness",
                   help="Potts smoothness weight (default 0.5)")
    p.add_argument("--ratio", type=float, help="candidate ratio-test threshold (default 0.4)")
    p.add_argument("--meanshift-threshold", type=float, dest="meanshift_threshold")
    p.add_argument("--meanshift-iters", type=int, dest="meanshift_iters")
    p.add_argument("--depth-bias", type=float, dest="depth_bias",
                   help="relative z-test bias (default 1e-3)")
    p.add_argument("--workers", type=int, help="worker threads (default: core count)")
    p.add_argument("--cache", help="stage cache directory")
    p.add_argument("--dump-depth", dest="dump_depth", metavar="DIR",
                   help="write per-view 16-bit depth PNGs")
    p.add_argument("--dump-quality", dest="dump_quality", metavar="FILE",
                   help="write per-face quality CSV")
    p.add_argument("--dump-labels", dest="dump_labels", metavar="FILE",
                   help="write per-face ranked candidate CSV")
    p.add_argument("--dump-dist", dest="dump_dist", metavar="DIR",
                   help="write per-view 16-bit distance-map PNGs")


def _build_config(args) -> PipelineConfig:
    config = PipelineConfig()
    if args.config:
        config = config_from_file(args.config, config)
    overrides = {}
    for f in fields(PipelineConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            overrides[f.name] = value
    return replace(config, **overrides) if overrides else config


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="texmap", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("texture", help="texture a mesh from posed views")
    p.add_argument("--mesh", required=True)
    p.add_argument("--views", required=True, help="view manifest JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--image-root", help="base directory for manifest image paths")
    p.add_argument("--drop-degenerate", action="store_true",
                   help="drop degenerate faces instead of failing")
    p.add_argument("--weld", type=float, metavar="EPS",
                   help="merge vertices within EPS before processing")
    _add_pipeline_flags(p)

    p = sub.add_parser("evaluate", help="score a textured model against its views")
    p.add_argument("--model", required=True, help="exported model OBJ")
    p.add_argument("--views", required=True)
    p.add_argument("--report", required=True, help="output report JSON")
    p.add_argument("--image-root")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("synth", help="generate a synthetic test scene")
    p.add_argument("--shape", default="cube", choices=["cube", "icosphere", "plane-grid"])
    p.add_argument("--subdiv", type=int, default=2, help="icosphere subdivisions")
    p.add_argument("--grid-n", type=int, default=8, help="plane-grid cells per side")
    p.add_argument("--pattern", default="checkerboard",
                   choices=["checkerboard", "gradient", "uv-debug", "uniform"])
    p.add_argument("--cells", type=int, default=8, help="checkerboard cells per extent")
    p.add_argument("--cameras", type=int, default=6)
    p.add_argument("--layout", default="axes", choices=["axes", "ring"])
    p.add_argument("--radius", type=float, default=2.0)
    p.add_argument("--elevation", type=float, default=30.0, help="ring elevation (degrees)")
    p.add_argument("--image-size", type=int, default=512)
    p.add_argument("--gain-range", metavar="A:B",
                   help="alternate per-view gains between A and B")
    p.add_argument("--bias", type=float, default=0.0, help="additive intensity bias")
    p.add_argument("--jitter-deg", type=float, default=0.0, help="manifest pose rotation jitter")
    p.add_argument("--jitter-frac", type=float, default=0.0,
                   help="manifest pose translation jitter (fraction of distance)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("inspect", help="dump per-face candidates/costs/quality as CSV")
    p.add_argument("--mesh", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--out", required=True, help="directory for quality.csv and labels.csv")
    p.add_argument("--image-root")
    p.add_argument("--drop-degenerate", action="store_true")
    p.add_argument("--weld", type=float, metavar="EPS")
    _add_pipeline_flags(p)
    return parser


def _cmd_texture(args) -> int:
    config = _build_config(args)
    _, report = run_texture(
        args.mesh,
        args.views,
        args.out,
        config,
        image_root=args.image_root,
        drop_degenerate=args.drop_degenerate,
        weld_eps=args.weld,
    )
    print(f"textured {report['mesh_faces']} faces from {report['views']} views "
          f"({report['untextured_faces']} untextured) -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    config = PipelineConfig(workers=args.workers or 0)
    report = run_evaluate(args.model, args.views, args.report, config,
                          image_root=args.image_root)
    print(f"evaluated {report.evaluated_views} views: "
          f"mean PSNR {report.mean_psnr:.2f} dB, mean MS-SSIM {report.mean_ms_ssim:.4f}")
    return 0


def _cmd_synth(args) -> int:
    from .synth import SceneSpec, generate

    gains = (1.0,)
    if args.gain_range:
        try:
            a, b = (float(x) for x in args.gain_range.split(":"))
        except ValueError:
            raise InputError(f"--gain-range expects A:B, got {args.gain_range!r}") from None
        gains = tuple(a if i % 2 == 0 else b for i in range(args.cameras))
    spec = SceneSpec(
        shape=args.shape,
        subdiv=args.subdiv,
        grid_n=args.grid_n,
        pattern=args.pattern,
        cells=args.cells,
        cameras=args.cameras,
        layout=args.layout,
        radius=args.radius,
        elevation_deg=args.elevation,
        image_size=args.image_size,
        gains=gains,
        biases=(args.bias,),
        jitter_rot_deg=args.jitter_deg,
        jitter_trans_frac=args.jitter_frac,
        seed=args.seed,
    )
    paths = generate(spec, args.out)
    print(f"scene written to {paths['out_dir']}")
    return 0


def _cmd_inspect(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _build_config(args)
    config = replace(
        config,
        dump_quality=str(out / "quality.csv"),
        dump_labels=str(out / "labels.csv"),
    )
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        run_texture(
            args.mesh, args.views, tmp, config,
            image_root=args.image_root,
            drop_degenerate=args.drop_degenerate,
            weld_eps=args.weld,
        )
    print(f"wrote {out / 'quality.csv'} and {out / 'labels.csv'}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
        )
        handlers = {
            "texture": _cmd_texture,
            "evaluate": _cmd_evaluate,
            "synth": _cmd_synth,
            "inspect": _cmd_inspect,
        }
        return handlers[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TexmapError as exc:
        stage = getattr(exc, "stage", None)
        cause = getattr(exc, "cause", None)
        if isinstance(cause, InputError):
            print(f"error: {exc}", file=sys.stderr)
            return 1
        where = f" in stage {stage!r}" if stage else ""
        print(f"internal error{where}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - map anything unexpected to exit 2
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
