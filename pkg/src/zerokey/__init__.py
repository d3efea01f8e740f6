"""Zero-shot text-prompted 3D keypoint detection on meshes.

Given a mesh and a natural-language description ("the nose of the
airplane"), the pipeline renders the mesh from a fixed catalog of
calibrated views, asks a 2D point detector about each view, lifts the
answers back onto the surface through the cached depth, and fuses them
into named 3D keypoints with a density-based clustering step that
rejects per-view outliers.  No training and no per-category tuning is
involved; the detector can be any service speaking the small HTTP
protocol in ``detector``, or the bundled offline mock.

The typical flow::

    from zerokey import load_mesh, normalize_mesh, RunConfig, run_pipeline

    config = RunConfig(mesh_path="chair.obj", category="chair")
    result = run_pipeline(config)
    for pred in result.all_predictions():
        print(pred.prompt_text, pred.anchor.position)
"""

from .backproject import LiftedPoint, backproject_patch, backproject_pixel
from .cluster import (NOISE, ClusterInfo, ClusterResult, KeypointPrediction,
                      PointSet, aggregate_hdbscan, aggregate_mean,
                      core_distance, default_min_cluster_size, hdbscan,
                      mutual_reachability)
from .detector import (GLOBAL_PROMPT_ID, GLOBAL_PROMPT_TEXT, CatalogEntry,
                       Detection2D, DetectorBackend, FileNamer,
                       MockDetectorBackend, MockDetectorConfig, MockNamer,
                       NamerBackend, PromptCatalog, RecordingBackend,
                       RemoteDetectorBackend, RemoteNamer, ReplayBackend,
                       catalog_for_category, list_candidate_keypoints,
                       load_prompt_catalog, mock_detect, packaged_catalog,
                       point_prompt, query_points, record_replay)
from .errors import *  # noqa: F401,F403  (error types are part of the API)
from .errors import __all__ as _error_names
from .evaluate import (DEFAULT_THRESHOLDS, EvalReport, GroundTruthSet, IoURow,
                       RoundTripResult, compute_iou, describability_roundtrip,
                       load_ground_truth, merge_reports, roundtrip_curve,
                       write_curve_csv)
from .mesh import (Normalization, SurfacePoint, TriangleMesh,
                   geodesic_distance, load_mesh, nearest_surface_point,
                   nearest_surface_points, normalize_mesh, pairwise_geodesic,
                   write_keypoint_markers_obj)
from .pipeline import (PipelineResult, PromptOutcome, RunConfig,
                       build_backend, build_prompts, detect_keypoints,
                       load_predictions, predictions_payload, run_ablation,
                       run_pipeline, simulate)
from .render import (FACE_NONE, Camera, RenderedView, ShadeStyle,
                     generate_views, load_png, load_raw_buffer,
                     pixel_footprint, project, render, render_with_marker,
                     save_png, save_raw_buffer, unproject_ray)
from .shapes import make_cube, make_grid_plane, make_icosphere

__version__ = "0.1.0"

__all__ = [
    "Camera", "CatalogEntry", "ClusterInfo", "ClusterResult",
    "DEFAULT_THRESHOLDS", "Detection2D", "DetectorBackend", "EvalReport",
    "FACE_NONE",
    "FileNamer", "GLOBAL_PROMPT_ID", "GLOBAL_PROMPT_TEXT", "GroundTruthSet",
    "IoURow", "KeypointPrediction", "LiftedPoint", "MockDetectorBackend",
    "MockDetectorConfig", "MockNamer", "NOISE", "NamerBackend",
    "Normalization", "PipelineResult", "PointSet", "PromptCatalog",
    "PromptOutcome", "RecordingBackend", "RemoteDetectorBackend",
    "RemoteNamer", "RenderedView", "ReplayBackend", "RoundTripResult",
    "RunConfig", "ShadeStyle", "SurfacePoint", "TriangleMesh",
    "aggregate_hdbscan", "aggregate_mean", "backproject_patch",
    "backproject_pixel", "build_backend", "build_prompts",
    "catalog_for_category", "compute_iou", "core_distance",
    "default_min_cluster_size", "describability_roundtrip",
    "detect_keypoints", "generate_views", "geodesic_distance", "hdbscan",
    "list_candidate_keypoints", "load_ground_truth", "load_mesh",
    "load_png", "load_predictions", "load_prompt_catalog", "load_raw_buffer",
    "make_cube", "make_grid_plane", "make_icosphere", "merge_reports",
    "mock_detect", "mutual_reachability", "nearest_surface_point",
    "nearest_surface_points", "normalize_mesh", "packaged_catalog",
    "pairwise_geodesic", "pixel_footprint", "point_prompt",
    "predictions_payload", "project", "query_points", "record_replay",
    "render", "render_with_marker", "roundtrip_curve", "run_ablation",
    "run_pipeline", "save_png", "save_raw_buffer", "simulate",
    "unproject_ray",
    "write_curve_csv", "write_keypoint_markers_obj",
] + list(_error_names)
