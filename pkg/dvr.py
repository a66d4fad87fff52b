"""
Distributed unstructured-mesh volume renderer.

    python dvr.py make-scene --dims 8,8,8 --mix tet --pattern interleavedCombs --clusters 4 --out-dir scenes/combs
    python dvr.py render --scene scenes/combs/scene.txt --size 128x128 --ranks 4 --out output/combs.ppm
    python dvr.py memory --scene scenes/combs/scene.txt
"""

import argparse
import os
import sys

import numpy as np

from common.errors import (
    CompactionCorruptionError,
    FragmentContractError,
    HandleOverflowError,
    ImageShapeError,
    MeshError,
    PartitionError,
    ProtocolError,
    TransportError,
)
from common.log import log, set_verbose
from common.scene_paths import ensure_dirs_for, output_path_for
from common.settings import get_float, get_int
from generate.heatmaps import plot_fragment_stats, write_heatmaps
from generate.images import diff_images, save_image
from harness.camera import framing_camera, parse_camera, parse_size
from harness.config import RenderConfig
from harness.distributed import render_distributed
from harness.memory import memory_report
from harness.oracle import render_oracle, render_single_fragment
from harness.scene import load_clusters, scene_bounds
from harness.timings import report_timings, stats_frame
from march.transfer_function import colormap_tf, load_tf_file, save_tf_file
from mesh.cluster_io import save_scene
from mesh.synthetic import MIXES, PATTERNS, assign_ranks, make_synthetic_partition

HANDLED_ERRORS = (
    MeshError, PartitionError, CompactionCorruptionError, HandleOverflowError, FragmentContractError,
    ProtocolError, TransportError, ImageShapeError, ValueError, FileNotFoundError,
)


def _field_range(clusters, field_id: int, timestep: int) -> tuple[float, float]:
    vals = np.concatenate([c.mesh.scalar_block(field_id, timestep) for c in clusters])
    lo, hi = float(vals.min()), float(vals.max())
    return (lo, hi) if hi > lo else (lo, lo + 1.0)


def build_config(args, clusters) -> RenderConfig:
    width, height = parse_size(args.size)
    if args.camera:
        camera = parse_camera(args.camera, width, height)
    else:
        camera = framing_camera(*scene_bounds(clusters), width, height)
    if args.tf:
        tf = load_tf_file(args.tf)
    else:
        tf = colormap_tf("viridis", _field_range(clusters, args.field, args.timestep))
        log("CLI", "No --tf given; using a viridis ramp over the field's range")
    return RenderConfig(
        camera=camera,
        tf=tf,
        scene=args.scene,
        ranks=args.ranks,
        step=get_float("DVR_STEP", args.step),
        frag_mode=args.frag_mode,
        frag_k=get_int("DVR_FRAG_K", args.frag_k),
        overflow=args.overflow,
        precision=args.precision,
        field=args.field,
        timestep=args.timestep,
        compacted=not args.no_compaction,
        verify_reconstruction=args.verify_reconstruction,
        share_edges=not args.per_face_left_tests,
        repeat=args.repeat,
        workers=get_int("DVR_WORKERS", args.workers),
        out=args.out,
        oracle_out=args.oracle,
        diff_out=args.diff,
        heatmaps_dir=args.heatmaps,
        baseline_out=args.baseline_single_fragment,
        stats_out=args.stats,
    )


def cmd_render(args) -> int:
    clusters = load_clusters(args.scene)
    config = build_config(args, clusters)
    result = render_distributed(config, clusters)
    out = config.out or output_path_for("render.ppm")
    save_image(out, result.image)
    log("CLI", f"Image written to {out}")

    oracle = None
    if config.oracle_out or (config.diff_out and not config.baseline_out):
        oracle = render_oracle(config, clusters)
        if config.oracle_out:
            save_image(config.oracle_out, oracle)
            log("CLI", f"Oracle image written to {config.oracle_out}")
        max_abs = float(np.abs(oracle - result.image).max())
        log("CLI", f"Distributed vs oracle: max |delta| = {max_abs:.3g}")

    baseline = None
    if config.baseline_out:
        baseline = render_single_fragment(result)
        save_image(config.baseline_out, baseline)
        log("CLI", f"Single-fragment baseline written to {config.baseline_out}")

    if config.diff_out:
        other = baseline if baseline is not None else oracle
        heat, max_abs, mean_l2 = diff_images(result.image, other)
        save_image(config.diff_out, heat)
        log("CLI", f"Diff written to {config.diff_out}: max |delta| = {max_abs:.3g}, mean L2 = {mean_l2:.3g}")

    if config.heatmaps_dir:
        counts = [r.pixel_counts.reshape(config.camera.height, config.camera.width) for r in result.ranks]
        write_heatmaps(config.heatmaps_dir, counts)

    stats = stats_frame(result)
    if config.repeat > 1:
        timings = report_timings(config, clusters)
        for col in ("integrationMs", "integrationWallMs", "compositingMs", "totalMs"):
            stats[col] = timings[col].values
    if config.stats_out:
        ensure_dirs_for(config.stats_out)
        stats.to_json(config.stats_out, orient="records", indent=2)
        plot_fragment_stats(stats, os.path.splitext(config.stats_out)[0] + "_fragments.png")
        log("CLI", f"Stats written to {config.stats_out}")

    for r in result.ranks:
        if r.march.failures:
            log("CLI", f"rank {r.rank}: {r.march.failures} segments dropped by march failures", "WARN")
    return 0


def cmd_make_scene(args) -> int:
    dims = tuple(int(d) for d in args.dims.split(","))
    if len(dims) != 3:
        raise ValueError(f"--dims needs three comma-separated integers, got {args.dims!r}")
    clusters = make_synthetic_partition(dims, args.mix, args.pattern, args.clusters,
                                        fields=args.fields, timesteps=args.timesteps)
    if args.ranks:
        assign_ranks(clusters, args.ranks)
    os.makedirs(args.out_dir, exist_ok=True)
    manifest = os.path.join(args.out_dir, "scene.txt")
    save_scene(clusters, manifest)
    tf_path = os.path.join(args.out_dir, "default.tf")
    save_tf_file(colormap_tf("viridis", _field_range(clusters, 0, 0)), tf_path)
    log("CLI", f"Wrote {len(clusters)} clusters, manifest {manifest} and transfer function {tf_path}")
    return 0


def cmd_memory(args) -> int:
    clusters = load_clusters(args.scene)
    df = memory_report(clusters)
    print(df.to_string(index=False))
    if args.csv:
        ensure_dirs_for(args.csv)
        df.to_csv(args.csv, index=False)
        log("CLI", f"Memory report written to {args.csv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Distributed volume rendering of partitioned unstructured meshes")
    parser.add_argument("--quiet", action="store_true", help="Only print warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", help="Render a scene with simulated ranks and deep compositing")
    r.add_argument("--scene", required=True, help="Scene manifest (one '<rank> <path>' line per cluster)")
    r.add_argument("--camera", help="px,py,pz,lx,ly,lz,ux,uy,uz,fov (default: frame the scene)")
    r.add_argument("--size", default="256x256", help="Image size WxH")
    r.add_argument("--tf", help="Transfer function file (default: viridis ramp over the field range)")
    r.add_argument("--ranks", type=int, default=1)
    r.add_argument("--step", type=float, default=None, help="Sample spacing (env DVR_STEP)")
    r.add_argument("--frag-mode", choices=("two-pass", "single-pass"), default="two-pass")
    r.add_argument("--frag-k", type=int, default=None, help="Single-pass list capacity (env DVR_FRAG_K)")
    r.add_argument("--overflow", choices=("drop", "merge"), default="drop")
    r.add_argument("--precision", choices=("float", "fixed"), default="float")
    r.add_argument("--field", type=int, default=0)
    r.add_argument("--timestep", type=int, default=0)
    r.add_argument("--out", help="Output image (.ppm or .png)")
    r.add_argument("--oracle", help="Also render the single-process oracle to this path")
    r.add_argument("--diff", help="L2 heatmap vs the baseline (or the oracle) to this path")
    r.add_argument("--heatmaps", help="Directory for per-rank fragment-count heatmaps")
    r.add_argument("--baseline-single-fragment", help="Render the single-fragment baseline to this path")
    r.add_argument("--stats", help="Per-rank stats JSON path")
    r.add_argument("--repeat", type=int, default=1, help="Average timings over N runs")
    r.add_argument("--workers", type=int, default=None, help="Pixel worker processes per rank (env DVR_WORKERS)")
    r.add_argument("--no-compaction", action="store_true", help="March explicit vertex lists")
    r.add_argument("--verify-reconstruction", action="store_true",
                   help="Check every reconstructed element against the stored one")
    r.add_argument("--per-face-left-tests", action="store_true",
                   help="Test exit-face candidates one face at a time (left-test instrumentation)")
    r.set_defaults(func=cmd_render)

    m = sub.add_parser("make-scene", help="Write a synthetic partitioned scene")
    m.add_argument("--dims", default="8,8,8")
    m.add_argument("--mix", choices=MIXES, default="tet")
    m.add_argument("--pattern", choices=PATTERNS, default="slabs")
    m.add_argument("--clusters", type=int, default=2)
    m.add_argument("--ranks", type=int, default=None, help="Round-robin clusters over this many ranks")
    m.add_argument("--fields", type=int, default=1)
    m.add_argument("--timesteps", type=int, default=1)
    m.add_argument("--out-dir", required=True)
    m.set_defaults(func=cmd_make_scene)

    mem = sub.add_parser("memory", help="Per-rank memory breakdown")
    mem.add_argument("--scene", required=True)
    mem.add_argument("--csv", help="Also write the table as CSV")
    mem.set_defaults(func=cmd_memory)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.quiet:
        set_verbose(False)
    return args.func(args)


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        log("CLI", "Interrupted", "WARN")
        sys.exit(130)
    except HANDLED_ERRORS as e:
        log("CLI", f"{type(e).__name__}: {e}", "ERROR")
        sys.exit(1)
