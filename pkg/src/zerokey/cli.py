"""Command-line entry points.

Subcommands cover the full workflow: detect runs the pipeline on a
mesh, eval scores a predictions file, ablate and simulate drive batch
experiments on the offline mock, roundtrip checks describability, and
render-debug dumps raw view buffers for inspection.

Exit codes: 0 success (an empty result is still a success), 2 bad
configuration or unreadable input, 3 unrecoverable backend failure,
4 evaluation mismatch (wrong mesh or empty ground truth).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .detector import MockNamer, RemoteNamer, packaged_catalog
from .errors import (CacheMissError, ConfigError, DetectorTimeoutError,
                     EmptyGroundTruthError, EndpointUnreachableError,
                     GatewayError, MeshMismatchError, PipelineError,
                     ProtocolError, ZeroKeyError)
from .evaluate import (DEFAULT_THRESHOLDS, compute_iou,
                       describability_roundtrip, load_ground_truth)
from .mesh import load_mesh, normalize_mesh, write_keypoint_markers_obj
from .pipeline import (RunConfig, build_backend, load_predictions,
                       run_ablation, run_pipeline, simulate)
from .render import pixel_footprint, render, save_raw_buffer

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_EVAL = 4


def _load_normalized(path):
    return normalize_mesh(load_mesh(path))


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _config_from_args(args) -> RunConfig:
    config = RunConfig.from_toml(args.config) if args.config else RunConfig()
    overrides = dict(
        mesh_path=args.mesh, model_id=args.model_id, category=args.category,
        catalog_path=args.catalog, prompt_mode=args.prompt_mode,
        views=args.views, width=args.width, height=args.height,
        patch_size=args.patch_size, aggregation=args.aggregation,
        keep=args.keep, k=args.k, min_cluster_size=args.min_cluster_size,
        seed=args.seed, sigma=args.sigma, miss_prob=args.miss_prob,
        outlier_prob=args.outlier_prob, multi_prob=args.multi_prob,
        detector_url=args.detector_url, cache_dir=args.cache_dir,
        cache_mode=args.cache_mode, output_dir=args.out)
    if args.use_short:
        overrides["use_short"] = True
    return config.override(**overrides)


def _add_run_flags(parser) -> None:
    parser.add_argument("--config", help="TOML config; flags override it")
    parser.add_argument("--mesh", help="mesh file (OBJ or PLY)")
    parser.add_argument("--model-id", dest="model_id")
    parser.add_argument("--category", help="prompt catalog category")
    parser.add_argument("--catalog", help="JSON prompt catalog path")
    parser.add_argument("--prompt-mode", dest="prompt_mode",
                        choices=["per-point", "global"])
    parser.add_argument("--use-short", dest="use_short", action="store_true",
                        help="use short keypoint names in prompts")
    parser.add_argument("--views", type=int)
    parser.add_argument("--width", type=int)
    parser.add_argument("--height", type=int)
    parser.add_argument("--patch-size", dest="patch_size", type=int)
    parser.add_argument("--aggregation", choices=["mean", "hdbscan"])
    parser.add_argument("--keep", choices=["best", "all"])
    parser.add_argument("--k", type=int)
    parser.add_argument("--min-cluster-size", dest="min_cluster_size",
                        type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--sigma", type=float,
                        help="mock detector pixel noise")
    parser.add_argument("--miss-prob", dest="miss_prob", type=float)
    parser.add_argument("--outlier-prob", dest="outlier_prob", type=float)
    parser.add_argument("--multi-prob", dest="multi_prob", type=float)
    parser.add_argument("--detector-url", dest="detector_url")
    parser.add_argument("--cache-dir", dest="cache_dir")
    parser.add_argument("--cache-mode", dest="cache_mode",
                        choices=["record", "replay"])
    parser.add_argument("--mock-gt", dest="mock_gt",
                        help="ground-truth JSON; switches to the offline "
                             "mock detector")
    parser.add_argument("--out", help="output directory")


def _mock_setup(config, args):
    """Load mesh + ground truth and derive mock prompts when asked."""
    if not config.mesh_path:
        raise ConfigError("--mesh (or mesh_path in the config) is required")
    mesh = _load_normalized(config.mesh_path)
    if not args.mock_gt:
        return mesh, None, None
    gt = load_ground_truth(args.mock_gt, mesh)
    for line in gt.warnings:
        print(f"warning: {line}", file=sys.stderr)
    prompts = None
    if config.prompt_mode == "per-point" and not config.category:
        from .detector import point_prompt
        prompts = [(pid, point_prompt(f"marked point {pid}"))
                   for pid in gt.ids()]
    return mesh, gt, prompts


def cmd_detect(args) -> int:
    config = _config_from_args(args)
    mesh, gt, prompts = _mock_setup(config, args)
    result = run_pipeline(config, mesh=mesh, prompts=prompts,
                          ground_truth=gt.keypoints if gt else None,
                          out_dir=config.output_dir)
    counts = result.manifest["counts"]
    print(f"{counts['keypoints']} keypoints from {counts['prompts']} prompts "
          f"over {counts['views']} views "
          f"({counts['query_failures']} query failures, "
          f"{counts['degraded_prompts']} degraded)")
    if result.predictions_path:
        print(f"predictions: {result.predictions_path}")
        print(f"manifest:    {result.manifest_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    mesh = _load_normalized(args.mesh)
    gt = load_ground_truth(args.ground_truth, mesh)
    for line in gt.warnings:
        print(f"warning: {line}", file=sys.stderr)
    preds, payload = load_predictions(args.predictions, mesh)
    report = compute_iou(mesh, preds, gt, model_id=gt.model_id,
                         aggregation=payload.get("aggregation"))
    for row in report.rows:
        print(f"tau={row.threshold:<6g} tp={row.true_positives:<3d} "
              f"iou={row.iou:.4f}")
    if args.csv:
        report.write_csv(args.csv)
        print(f"wrote {args.csv}")
    if args.json:
        report.write_json(args.json)
        print(f"wrote {args.json}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    mesh = _load_normalized(args.mesh)
    gt = load_ground_truth(args.ground_truth, mesh)
    from .detector import point_prompt
    prompts = [(pid, point_prompt(f"marked point {pid}")) for pid in gt.ids()]
    config = RunConfig(seed=args.seed, sigma=args.sigma,
                       outlier_prob=args.outlier_prob, width=args.width,
                       height=args.height)
    rows = run_ablation(
        config, mesh, gt,
        backend_factory=lambda cfg: build_backend(
            cfg, ground_truth=gt.keypoints),
        prompts=prompts, views_axis=tuple(_int_list(args.views_axis)),
        out_csv=args.out)
    for row in rows:
        print(f"views={row['views']:<3d} agg={row['aggregation']:<8s} "
              f"mode={row['prompt_mode']:<9s} "
              f"iou@0.05={row['iou@0.05']:.4f}")
    if args.out:
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    mesh = _load_normalized(args.mesh)
    gt = load_ground_truth(args.ground_truth, mesh)
    config = RunConfig(width=args.width, height=args.height)
    rows = simulate(config, mesh, gt.keypoints,
                    sigma_grid=tuple(_float_list(args.sigma_grid)),
                    outlier_grid=tuple(_float_list(args.outlier_grid)),
                    views_grid=tuple(_int_list(args.views_grid)),
                    seeds=tuple(_int_list(args.seeds)),
                    out_csv=args.out)
    for row in rows:
        print(f"sigma={row['sigma']:<4g} outliers={row['outlier_prob']:<4g} "
              f"views={row['views']:<3d} seed={row['seed']:<2d} "
              f"mean={row['mean_error']:.4f} p95={row['p95_error']:.4f} "
              f"miss={row['miss_rate']:.2f}")
    if args.out:
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_roundtrip(args) -> int:
    mesh = _load_normalized(args.mesh)
    gt = load_ground_truth(args.ground_truth, mesh)
    if args.id not in gt.keypoints:
        raise ConfigError(f"ground truth has no keypoint id {args.id}; "
                          f"available: {gt.ids()}")
    keypoint = gt.keypoints[args.id]
    if args.namer_url:
        namer = RemoteNamer(args.namer_url)
    elif args.labels:
        namer = MockNamer([tok.strip() for tok in args.labels.split(",")])
    else:
        raise ConfigError("roundtrip needs --labels or --namer-url")
    config = RunConfig(seed=args.seed, sigma=args.sigma,
                       detector_url=args.detector_url)
    backend = build_backend(
        config, ground_truth=gt.keypoints if not args.detector_url else None)
    result = describability_roundtrip(
        mesh, keypoint, namer, backend, namer_views=args.namer_views,
        detect_views=args.views, width=args.width, height=args.height,
        prompt_id=args.id)
    print(f"label: {result.label!r} "
          f"(votes from {result.visible_views} views: {result.votes})")
    if result.prediction is None:
        print("re-detection found nothing; error = inf")
    else:
        print(f"round-trip error: {result.error:.5f}")
    return EXIT_OK


def cmd_render_debug(args) -> int:
    mesh = _load_normalized(args.mesh)
    os.makedirs(args.out, exist_ok=True)
    config = RunConfig(views=args.views, width=args.width, height=args.height)
    cameras = config.cameras()
    index = []
    for vid, cam in enumerate(cameras):
        view = render(mesh, cam, view_id=vid)
        png = os.path.join(args.out, f"view_{vid:03d}.png")
        with open(png, "wb") as fh:
            fh.write(view.png_bytes())
        save_raw_buffer(os.path.join(args.out, f"view_{vid:03d}.depth"),
                        view.depth)
        save_raw_buffer(os.path.join(args.out, f"view_{vid:03d}.faceid"),
                        view.face_ids)
        hit = np.isfinite(view.depth)
        near = float(view.depth[hit].min()) if hit.any() else math.inf
        index.append({
            "view_id": vid,
            "position": [float(v) for v in cam.position],
            "fov_degrees": math.degrees(cam.fov),
            "width": cam.width, "height": cam.height,
            "coverage": round(float(hit.mean()), 6),
            "nearest_depth": near,
            "pixel_footprint_at_nearest":
                pixel_footprint(cam, near) if math.isfinite(near) else None,
        })
        print(f"view {vid:3d}: coverage {hit.mean():6.1%}  "
              f"nearest depth {near:.4f}")
    with open(os.path.join(args.out, "views.json"), "w") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.markers:
        write_keypoint_markers_obj(
            os.path.join(args.out, "markers.obj"),
            load_ground_truth(args.markers, mesh).points())
    print(f"wrote {len(cameras)} views to {args.out}")
    return EXIT_OK


def cmd_catalog(args) -> int:
    catalogs = packaged_catalog()
    for cat in catalogs:
        if args.category and cat.category != args.category:
            continue
        print(f"{cat.category} ({len(cat.entries)} keypoints)")
        if args.category:
            for entry in cat.entries:
                short = f"  [{entry.short_description}]" \
                    if entry.short_description else ""
                print(f"  {entry.id:3d}  {entry.description}{short}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zerokey",
        description="Text-prompted 3D keypoint detection on meshes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run the detection pipeline")
    _add_run_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--mesh", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--ground-truth", dest="ground_truth", required=True)
    p.add_argument("--csv", help="write the IoU table as CSV")
    p.add_argument("--json", help="write the IoU table as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate",
                       help="sweep views x aggregation x prompt mode")
    p.add_argument("--mesh", required=True)
    p.add_argument("--ground-truth", dest="ground_truth", required=True)
    p.add_argument("--views-axis", dest="views_axis", default="6,26,46")
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--outlier-prob", dest="outlier_prob", type=float,
                   default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--out", help="CSV path")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("simulate", help="noise sweep on the offline mock")
    p.add_argument("--mesh", required=True)
    p.add_argument("--ground-truth", dest="ground_truth", required=True)
    p.add_argument("--sigma-grid", dest="sigma_grid", default="0,2,5")
    p.add_argument("--outlier-grid", dest="outlier_grid", default="0,0.2")
    p.add_argument("--views-grid", dest="views_grid", default="6,26")
    p.add_argument("--seeds", default="0")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--out", help="CSV path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("roundtrip",
                       help="describe a keypoint, re-detect from the name")
    p.add_argument("--mesh", required=True)
    p.add_argument("--ground-truth", dest="ground_truth", required=True)
    p.add_argument("--id", type=int, required=True,
                   help="ground-truth keypoint id to test")
    p.add_argument("--labels", help="comma-separated mock namer answers")
    p.add_argument("--namer-url", dest="namer_url")
    p.add_argument("--detector-url", dest="detector_url")
    p.add_argument("--namer-views", dest="namer_views", type=int, default=4)
    p.add_argument("--views", type=int, default=26)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("render-debug",
                       help="dump views with depth and face-id buffers")
    p.add_argument("--mesh", required=True)
    p.add_argument("--views", type=int, default=6)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--markers", help="ground-truth JSON to export as OBJ")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render_debug)

    p = sub.add_parser("catalog", help="list packaged keypoint descriptions")
    p.add_argument("--category")
    p.set_defaults(func=cmd_catalog)

    return parser


_EVAL_ERRORS = (MeshMismatchError, EmptyGroundTruthError)
_BACKEND_ERRORS = (PipelineError, GatewayError, EndpointUnreachableError,
                   DetectorTimeoutError, ProtocolError, CacheMissError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _EVAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except _BACKEND_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ZeroKeyError, OSError) as exc:
        # remaining domain errors are input problems (parse, degenerate
        # mesh, bad view count, bad config), not transport failures
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
