"""Command-line entry points.

Three commands are installed: ``pipeline`` (run / ablate), ``flow``
(metrics / convert / viz / polar), and ``sample`` (shell diagnostics).
Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import LatentState, RngStream
from .errors import FlowDistError, InvalidArgumentError
from .flowio import decode_flo, encode_flo, encode_kitti_png, flow_to_color, render_polar_svg
from .images import write_png
from .metrics import (
    FlowDistribution,
    MetricReport,
    angular_error,
    epe_avg,
    f1_outliers,
    flow_entropy,
)
from .pipeline import PipelineConfig, aggregate_polar, read_flow_file, run_ablation_grid, run_pipeline
from .sampler import sample_neighbors, shell_chord, NearbyConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _run(fn) -> int:
    try:
        fn()
        return EXIT_OK
    except InvalidArgumentError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FlowDistError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


# ---------------------------------------------------------------------------
# pipeline


def pipeline_main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="pipeline", description="Run the flow-distribution pipeline")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run_p = sub.add_parser("run", help="execute one pipeline run from a JSON config")
    run_p.add_argument("--config", required=True)

    abl_p = sub.add_parser("ablate", help="run the delta x count x inversion ablation grid")
    abl_p.add_argument("--config", required=True)
    abl_p.add_argument("--deltas", default="30,50")
    abl_p.add_argument("--counts", default="500,1000")
    abl_p.add_argument("--seeds", default=None)

    args = ap.parse_args(argv)

    def do():
        cfg = PipelineConfig.from_json_file(args.config)
        if args.cmd == "run":
            report = run_pipeline(cfg)
            print(json.dumps(report.to_json_dict()["metrics"], indent=2, sort_keys=True))
        else:
            deltas = [float(x) for x in args.deltas.split(",") if x]
            counts = [int(x) for x in args.counts.split(",") if x]
            seeds = [int(x) for x in args.seeds.split(",")] if args.seeds else None
            table = run_ablation_grid(cfg, deltas, counts, seeds)
            print(json.dumps(table, indent=2, sort_keys=True))

    return _run(do)


# ---------------------------------------------------------------------------
# flow


def _load_pred_flows(path: str) -> FlowDistribution:
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("*.flo")) + sorted(p.glob("*.png"))
        if not files:
            raise InvalidArgumentError(f"no flow files in {path}")
        return FlowDistribution(tuple(read_flow_file(f) for f in files))
    return FlowDistribution((read_flow_file(p),))


def flow_main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="flow", description="Flow file metrics and conversions")
    sub = ap.add_subparsers(dest="cmd", required=True)

    met = sub.add_parser("metrics", help="accuracy/diversity metrics for predictions vs ground truth")
    met.add_argument("--pred", required=True, help="flow file or directory of flow files")
    met.add_argument("--gt", required=True)
    met.add_argument("--fg-mask", default=None, help="PNG mask; nonzero = foreground")

    conv = sub.add_parser("convert", help="convert between .flo and KITTI 16-bit .png")
    conv.add_argument("--in", dest="inp", required=True)
    conv.add_argument("--out", required=True)

    viz = sub.add_parser("viz", help="render a flow field with the color wheel")
    viz.add_argument("--in", dest="inp", required=True)
    viz.add_argument("--out", required=True)
    viz.add_argument("--max-mag", type=float, default=None)

    pol = sub.add_parser("polar", help="polar direction histogram over a directory of flows")
    pol.add_argument("--in-dir", dest="in_dir", required=True)
    pol.add_argument("--out", required=True)
    pol.add_argument("--sectors", type=int, default=16)

    args = ap.parse_args(argv)

    def do():
        if args.cmd == "metrics":
            dist = _load_pred_flows(args.pred)
            gt = read_flow_file(args.gt)
            fg = None
            if args.fg_mask:
                from .images import read_png

                fg = read_png(args.fg_mask).pixels[:, :, 0] > 0
            epe = epe_avg(dist, gt)
            aes = []
            f1s = [f1_outliers(m, gt, fg) for m in dist.members]
            for m in dist.members:
                try:
                    aes.append(angular_error(m, gt))
                except FlowDistError:
                    pass
            rep = MetricReport(
                epe_mean=epe,
                ae_mean_deg=float(np.mean(aes)) if aes else None,
                f1_all_pct=float(np.mean([f[0] for f in f1s])),
                f1_bg_pct=_opt_mean([f[1] for f in f1s]),
                f1_fg_pct=_opt_mean([f[2] for f in f1s]),
                entropy=flow_entropy(dist),
                n_members=dist.n,
            )
            print(rep.to_json())
        elif args.cmd == "convert":
            flow = read_flow_file(args.inp)
            out = Path(args.out)
            if out.suffix.lower() == ".png":
                out.write_bytes(encode_kitti_png(flow))
            elif out.suffix.lower() == ".flo":
                out.write_bytes(encode_flo(flow))
            else:
                raise InvalidArgumentError(f"unsupported output extension {out.suffix!r}")
        elif args.cmd == "viz":
            flow = read_flow_file(args.inp)
            write_png(flow_to_color(flow, args.max_mag), args.out)
        else:
            dist = _load_pred_flows(args.in_dir)
            hist = aggregate_polar(dist, args.sectors)
            render_polar_svg(hist, args.out)

    return _run(do)


def _opt_mean(vals):
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else None


# ---------------------------------------------------------------------------
# sample


def sample_main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="sample", description="Shell-geometry diagnostics")
    sub = ap.add_subparsers(dest="cmd", required=True)

    sh = sub.add_parser("shell", help="sample shell perturbations and print geometry stats")
    sh.add_argument("--dim", type=int, required=True)
    sh.add_argument("--delta", type=float, required=True)
    sh.add_argument("--count", type=int, required=True)
    sh.add_argument("--seed", type=int, default=0)

    args = ap.parse_args(argv)

    def do():
        rng = RngStream(args.seed, (1 << 40) + 7)
        z0 = LatentState(rng.normal(args.dim), (args.dim,))
        radius = z0.norm()
        samples = sample_neighbors(z0, NearbyConfig(delta=args.delta, count=args.count), args.seed)
        norms = np.array([s.norm() for s in samples])
        chords = np.array([np.linalg.norm(s.data - z0.data) for s in samples])
        expected = shell_chord(radius, args.delta)
        angle = np.degrees(np.arctan2(args.delta, radius))
        out = {
            "dim": args.dim,
            "delta": args.delta,
            "count": args.count,
            "seed": args.seed,
            "source_norm": radius,
            "norm_max_rel_dev": float(np.max(np.abs(norms - radius)) / radius),
            "chord_expected": expected,
            "chord_mean": float(chords.mean()),
            "chord_max_rel_dev": float(np.max(np.abs(chords - expected)) / max(expected, 1e-300)),
            "perturbation_angle_deg": float(angle),
        }
        print(json.dumps(out, indent=2, sort_keys=True))

    return _run(do)
