"""End-to-end driver: mesh in, named 3D keypoints out.

One run renders a fixed catalog of views, asks the detector backend
about every (prompt, view) pair, lifts answers to the surface through
the cached depth, and aggregates per prompt.  Queries fan out over a
bounded thread pool because remote detectors dominate wall time, but
results are keyed by (prompt id, view id) and consumed in a fixed
order, so completion order never leaks into the output.

A run produces two files: predictions.json, which is a pure function of
the inputs and therefore byte-identical across repeat runs, and
manifest.json, which records configuration, input digests, timings, and
per-query failures for auditing.  Individual query failures skip the
pair and are listed in the manifest; only a run where every single
query fails raises.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                      # Python 3.10
    import tomli as tomllib

from .backproject import backproject_patch
from .cluster import (KeypointPrediction, PointSet, aggregate_hdbscan,
                      aggregate_mean)
from .detector import (GLOBAL_PROMPT_ID, GLOBAL_PROMPT_TEXT, URL_ENV_VAR,
                       DetectorBackend, MockDetectorBackend,
                       MockDetectorConfig, RemoteDetectorBackend,
                       catalog_for_category, load_prompt_catalog,
                       packaged_catalog, point_prompt, query_points,
                       record_replay)
from .errors import ConfigError, MeshMismatchError, PipelineError, ZeroKeyError
from .evaluate import DEFAULT_THRESHOLDS, compute_iou
from .mesh import SurfacePoint, TriangleMesh, geodesic_distance, load_mesh, \
    normalize_mesh
from .render import render, generate_views

__all__ = [
    "PromptOutcome",
    "PipelineResult",
    "RunConfig",
    "build_backend",
    "build_prompts",
    "detect_keypoints",
    "load_predictions",
    "predictions_payload",
    "resolve_detector_url",
    "run_ablation",
    "run_pipeline",
    "simulate",
]

_AGGREGATIONS = ("mean", "hdbscan")
_KEEPS = ("best", "all")
_PROMPT_MODES = ("per-point", "global")
_CACHE_MODES = (None, "record", "replay")


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs, loadable from TOML with flag overrides.

    min_cluster_size 0 means "derive from the view count".  The detector
    URL falls back to the ZEROKEY_DETECTOR_URL environment variable when
    unset.  The sigma/miss/outlier/multi fields only drive the offline
    mock backend.
    """

    mesh_path: str | None = None
    model_id: str = "model"
    category: str | None = None
    catalog_path: str | None = None
    prompt_mode: str = "per-point"
    use_short: bool = False
    views: int = 26
    width: int = 512
    height: int = 512
    distance: float = 2.5
    fov_degrees: float = 40.0
    patch_size: int = 5
    aggregation: str = "hdbscan"
    keep: str = "best"
    k: int = 3
    min_cluster_size: int = 0
    seed: int = 0
    sigma: float = 0.0
    miss_prob: float = 0.0
    outlier_prob: float = 0.0
    multi_prob: float = 0.0
    detector_url: str | None = None
    timeout: float = 60.0
    attempts: int = 3
    max_in_flight: int = 8
    cache_dir: str | None = None
    cache_mode: str | None = None
    output_dir: str = "runs"

    def __post_init__(self):
        checks = [
            (self.views >= 1, f"views must be >= 1, got {self.views}"),
            (self.width >= 16 and self.height >= 16,
             f"image size must be >= 16, got {self.width}x{self.height}"),
            (self.patch_size >= 1 and self.patch_size % 2 == 1,
             f"patch_size must be a positive odd integer, got {self.patch_size}"),
            (self.aggregation in _AGGREGATIONS,
             f"aggregation must be one of {_AGGREGATIONS}, got {self.aggregation!r}"),
            (self.keep in _KEEPS,
             f"keep must be one of {_KEEPS}, got {self.keep!r}"),
            (self.prompt_mode in _PROMPT_MODES,
             f"prompt_mode must be one of {_PROMPT_MODES}, got {self.prompt_mode!r}"),
            (self.k >= 1, f"k must be >= 1, got {self.k}"),
            (self.min_cluster_size >= 0,
             f"min_cluster_size must be >= 0, got {self.min_cluster_size}"),
            (self.sigma >= 0, f"sigma must be >= 0, got {self.sigma}"),
            (all(0.0 <= p <= 1.0 for p in
                 (self.miss_prob, self.outlier_prob, self.multi_prob)),
             "probabilities must lie in [0, 1]"),
            (0 < self.fov_degrees < 180,
             f"fov_degrees must be in (0, 180), got {self.fov_degrees}"),
            (self.distance > 0, f"distance must be > 0, got {self.distance}"),
            (self.attempts >= 1, f"attempts must be >= 1, got {self.attempts}"),
            (self.max_in_flight >= 1,
             f"max_in_flight must be >= 1, got {self.max_in_flight}"),
            (self.cache_mode in _CACHE_MODES,
             f"cache_mode must be one of {_CACHE_MODES}, got {self.cache_mode!r}"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        if self.cache_mode and not self.cache_dir:
            raise ConfigError(f"cache_mode {self.cache_mode!r} needs cache_dir")

    @classmethod
    def from_mapping(cls, data: dict, source: str = "config") -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"{source}: unknown keys {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"{source}: {exc}") from exc

    @classmethod
    def from_toml(cls, path) -> "RunConfig":
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
        if "run" in doc and isinstance(doc["run"], dict):
            doc = doc["run"]
        return cls.from_mapping(doc, source=str(path))

    def override(self, **changes) -> "RunConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes) if changes else self

    def to_dict(self) -> dict:
        return asdict(self)

    def cameras(self):
        return generate_views(self.views, distance=self.distance,
                              fov=math.radians(self.fov_degrees),
                              width=self.width, height=self.height)

    def resolved_min_cluster_size(self) -> int | None:
        return self.min_cluster_size if self.min_cluster_size else None


def resolve_detector_url(config: RunConfig) -> str | None:
    return config.detector_url or os.environ.get(URL_ENV_VAR) or None


def build_backend(config: RunConfig,
                  ground_truth: dict[int, SurfacePoint] | None = None
                  ) -> DetectorBackend:
    """Assemble the detector stack a config describes.

    ground_truth switches to the offline mock.  cache_mode wraps the
    inner backend in record or replay; replay needs no inner backend at
    all, which is what makes offline reruns possible.
    """
    if config.cache_mode == "replay":
        return record_replay(None, config.cache_dir, "replay")
    if ground_truth is not None:
        inner = MockDetectorBackend(MockDetectorConfig(
            ground_truth=ground_truth, sigma=config.sigma,
            miss_prob=config.miss_prob, outlier_prob=config.outlier_prob,
            multi_prob=config.multi_prob, seed=config.seed))
    else:
        url = resolve_detector_url(config)
        if url is None:
            raise ConfigError(
                f"no detector URL: set detector_url or {URL_ENV_VAR}")
        inner = RemoteDetectorBackend(url, timeout=config.timeout,
                                      attempts=config.attempts)
    if config.cache_mode == "record":
        return record_replay(inner, config.cache_dir, "record")
    return inner


def build_prompts(config: RunConfig) -> list[tuple[int, str]]:
    """(prompt id, full prompt text) pairs for the configured mode."""
    if config.prompt_mode == "global":
        return [(GLOBAL_PROMPT_ID, GLOBAL_PROMPT_TEXT)]
    if config.catalog_path:
        catalogs = load_prompt_catalog(config.catalog_path)
    else:
        catalogs = packaged_catalog()
    if not config.category:
        raise ConfigError("per-point prompts need a category "
                          "(or prompt_mode = 'global')")
    try:
        catalog = catalog_for_category(catalogs, config.category)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    return [(pid, point_prompt(text))
            for pid, text in catalog.prompt_pairs(config.use_short)]


# ---------------------------------------------------------------------------
# core detection loop


@dataclass
class PromptOutcome:
    prompt_id: int
    prompt_text: str
    predictions: list[KeypointPrediction]
    detections: int
    lifted: int
    degraded: bool


@dataclass
class PipelineResult:
    outcomes: list[PromptOutcome]
    payload: dict
    manifest: dict
    predictions_path: str | None = None
    manifest_path: str | None = None

    def all_predictions(self) -> list[KeypointPrediction]:
        return [p for o in self.outcomes for p in o.predictions]


def detect_keypoints(mesh: TriangleMesh, prompts: list[tuple[int, str]],
                     backend: DetectorBackend, config: RunConfig
                     ) -> tuple[list[PromptOutcome], dict]:
    """Render, query, lift, aggregate.  Returns outcomes plus run stats.

    Backend failures (after the backend's own retries) skip that
    (prompt, view) pair; the pair list lands in the stats.  If every
    pair fails the run is unrecoverable and raises PipelineError.
    """
    t_start = time.perf_counter()
    views = [render(mesh, cam, view_id=vid)
             for vid, cam in enumerate(config.cameras())]
    t_render = time.perf_counter()

    tasks = [(pid, text, view) for pid, text in prompts for view in views]
    results: dict[tuple[int, int], list] = {}
    failures: dict[tuple[int, int], str] = {}
    with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
        futures = {
            pool.submit(query_points, backend, view, text, pid):
                (pid, view.view_id)
            for pid, text, view in tasks}
        for fut in as_completed(futures):
            key = futures[fut]
            try:
                results[key] = fut.result()
            except ZeroKeyError as exc:
                failures[key] = f"{type(exc).__name__}: {exc}"
    if tasks and len(failures) == len(tasks):
        pid, vid = min(failures)
        raise PipelineError(
            stage="detect",
            message=f"all {len(tasks)} queries failed; first error: "
                    f"{failures[(pid, vid)]}",
            view_id=vid, prompt_id=pid)
    t_detect = time.perf_counter()

    outcomes = []
    for pid, text in prompts:
        lifted = []
        n_det = 0
        for view in views:
            for det in results.get((pid, view.view_id), []):
                n_det += 1
                lp = backproject_patch(
                    view, det.pixel(config.width, config.height),
                    patch_size=config.patch_size,
                    view_id=view.view_id, prompt_id=pid)
                if lp is not None:
                    lifted.append(lp)
        if not lifted:
            outcomes.append(PromptOutcome(pid, text, [], n_det, 0, False))
            continue
        point_set = PointSet(prompt_id=pid, prompt_text=text,
                             points=lifted, mesh=mesh)
        if config.aggregation == "mean":
            preds = [aggregate_mean(point_set)]
        else:
            # the set-valued global prompt keeps every cluster
            keep = "all" if pid == GLOBAL_PROMPT_ID else config.keep
            preds = aggregate_hdbscan(
                point_set, k=config.k,
                min_cluster_size=config.resolved_min_cluster_size(),
                keep=keep, total_views=config.views)
        outcomes.append(PromptOutcome(
            pid, text, preds, n_det, len(lifted),
            degraded=any(p.degraded for p in preds)))
    t_done = time.perf_counter()

    stats = {
        "timings_s": {
            "render": round(t_render - t_start, 6),
            "detect": round(t_detect - t_render, 6),
            "aggregate": round(t_done - t_detect, 6),
            "total": round(t_done - t_start, 6),
        },
        "counts": {
            "views": len(views),
            "prompts": len(prompts),
            "queries": len(tasks),
            "query_failures": len(failures),
            "detections": sum(o.detections for o in outcomes),
            "lifted": sum(o.lifted for o in outcomes),
            "keypoints": sum(len(o.predictions) for o in outcomes),
            "empty_prompts": sum(1 for o in outcomes if not o.predictions),
            "degraded_prompts": sum(1 for o in outcomes if o.degraded),
        },
        "failures": [
            {"prompt_id": pid, "view_id": vid, "error": msg}
            for (pid, vid), msg in sorted(failures.items())],
    }
    return outcomes, stats


# ---------------------------------------------------------------------------
# serialization


def _float3(values) -> list[float]:
    return [float(v) for v in values]


def predictions_payload(mesh: TriangleMesh, outcomes: list[PromptOutcome],
                        config: RunConfig) -> dict:
    norm = mesh.normalization
    return {
        "schema_version": 1,
        "model_id": config.model_id,
        "normalization": None if norm is None else {
            "center": _float3(norm.center),
            "scale": float(norm.scale),
            "convention": norm.convention,
        },
        "aggregation": {
            "method": config.aggregation,
            "k": config.k,
            "min_cluster_size": config.min_cluster_size,
            "keep": config.keep,
            "patch_size": config.patch_size,
            "views": config.views,
        },
        "prompts": [
            {
                "id": o.prompt_id,
                "text": o.prompt_text,
                "degraded": o.degraded,
                "keypoints": [
                    {
                        "xyz": _float3(p.anchor.position),
                        "face": int(p.anchor.face),
                        "barycentric": _float3(p.anchor.barycentric),
                        "stability": float(p.stability),
                        "support": int(p.support),
                    } for p in o.predictions],
            } for o in outcomes],
    }


def _dump_json(path, payload) -> str:
    blob = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    with open(path, "w") as fh:
        fh.write(blob)
    return hashlib.sha256(blob.encode()).hexdigest()


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_predictions(path, mesh: TriangleMesh) -> tuple[list[SurfacePoint], dict]:
    """Read a predictions file back as surface points on the given mesh.

    Each keypoint is rebuilt from its face and barycentric record; if the
    rebuilt position disagrees with the stored xyz by more than 1e-6 the
    file belongs to a different mesh (or normalization) and evaluating
    against it would be silently wrong, so MeshMismatchError is raised.
    """
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if payload.get("schema_version") != 1:
        raise ConfigError(
            f"{path}: unsupported schema_version "
            f"{payload.get('schema_version')!r}")
    points = []
    for prompt in payload.get("prompts", []):
        for kp in prompt.get("keypoints", []):
            face = int(kp["face"])
            if not 0 <= face < len(mesh.faces):
                raise MeshMismatchError(
                    f"{path}: face {face} outside mesh ({len(mesh.faces)})")
            sp = SurfacePoint.from_barycentric(mesh, face, kp["barycentric"])
            stored = np.asarray(kp["xyz"], dtype=np.float64)
            if float(np.linalg.norm(sp.xyz - stored)) > 1e-6:
                raise MeshMismatchError(
                    f"{path}: keypoint does not lie on this mesh "
                    f"(face {face})")
            points.append(sp)
    return points, payload


def run_pipeline(config: RunConfig, backend: DetectorBackend | None = None,
                 *, mesh: TriangleMesh | None = None,
                 prompts: list[tuple[int, str]] | None = None,
                 ground_truth: dict[int, SurfacePoint] | None = None,
                 out_dir: str | None = None) -> PipelineResult:
    """Full run: load and normalize, detect, write predictions + manifest.

    mesh/prompts/backend can be injected for tests; otherwise they come
    from the config.  out_dir=None skips writing files.  A run that
    produces zero keypoints is still a success; the manifest says so.
    """
    mesh_info: dict = {}
    if mesh is None:
        if not config.mesh_path:
            raise ConfigError("config has no mesh_path and no mesh was given")
        mesh = normalize_mesh(load_mesh(config.mesh_path))
        mesh_info["path"] = str(config.mesh_path)
        mesh_info["sha256"] = _file_digest(config.mesh_path)
    elif mesh.normalization is None:
        mesh = normalize_mesh(mesh)
    mesh_info.update(vertices=int(len(mesh.vertices)),
                     faces=int(len(mesh.faces)),
                     dropped_faces=int(mesh.dropped_faces))

    if prompts is None:
        prompts = build_prompts(config)
    if backend is None:
        backend = build_backend(config, ground_truth=ground_truth)

    outcomes, stats = detect_keypoints(mesh, prompts, backend, config)
    payload = predictions_payload(mesh, outcomes, config)

    manifest = {
        "schema_version": 1,
        "config": config.to_dict(),
        "backend": getattr(backend, "tag", "unknown"),
        "mesh": mesh_info,
        **stats,
        "outputs": {},
    }

    result = PipelineResult(outcomes=outcomes, payload=payload,
                            manifest=manifest)
    if out_dir is None:
        out_dir = config.output_dir
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        pred_path = os.path.join(out_dir, "predictions.json")
        digest = _dump_json(pred_path, payload)
        manifest["outputs"]["predictions.json"] = {"sha256": digest}
        man_path = os.path.join(out_dir, "manifest.json")
        _dump_json(man_path, manifest)
        result.predictions_path = pred_path
        result.manifest_path = man_path
    return result


# ---------------------------------------------------------------------------
# batch experiments


def _write_rows(path, header: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        writer.writerows(rows)


def run_ablation(config: RunConfig, mesh: TriangleMesh, ground_truth,
                 backend_factory, prompts: list[tuple[int, str]], *,
                 views_axis=(6, 26, 46), aggregations=_AGGREGATIONS,
                 prompt_modes=_PROMPT_MODES, thresholds=DEFAULT_THRESHOLDS,
                 out_csv: str | None = None) -> list[dict]:
    """Sweep view count x aggregation x prompt mode; score each cell.

    backend_factory(config) builds a fresh backend per cell so seeded
    offline backends stay independent.  Rows carry the IoU at every
    threshold; the CSV (when requested) mirrors them.
    """
    if mesh.normalization is None:
        mesh = normalize_mesh(mesh)
    rows = []
    for views in views_axis:
        for aggregation in aggregations:
            for mode in prompt_modes:
                cell = config.override(views=views, aggregation=aggregation,
                                       prompt_mode=mode)
                cell_prompts = [(GLOBAL_PROMPT_ID, GLOBAL_PROMPT_TEXT)] \
                    if mode == "global" else prompts
                backend = backend_factory(cell)
                outcomes, stats = detect_keypoints(mesh, cell_prompts,
                                                   backend, cell)
                preds = [p for o in outcomes for p in o.predictions]
                report = compute_iou(mesh, preds, ground_truth,
                                     thresholds=thresholds)
                row = {
                    "views": views,
                    "aggregation": aggregation,
                    "prompt_mode": mode,
                    "n_predicted": len(preds),
                    "degraded_prompts": stats["counts"]["degraded_prompts"],
                }
                for r in report.rows:
                    row[f"iou@{r.threshold:g}"] = round(r.iou, 6)
                rows.append(row)
    if out_csv:
        _write_rows(out_csv, list(rows[0].keys()), rows)
    return rows


def simulate(config: RunConfig, mesh: TriangleMesh,
             ground_truth: dict[int, SurfacePoint], *,
             sigma_grid=(0.0, 2.0, 5.0), outlier_grid=(0.0, 0.2),
             views_grid=(6, 26), seeds=(0,),
             out_csv: str | None = None) -> list[dict]:
    """Noise sweep on the offline mock: how fast does accuracy decay?

    Each cell runs the full pipeline against synthetic detections with
    the given pixel noise and outlier rate, then measures the geodesic
    error from each prompt's best keypoint to its ground truth.  Rows
    report mean and 95th-percentile error, the fraction of prompts that
    produced nothing (misses), and how many fell back to the degraded
    mean path.
    """
    if mesh.normalization is None:
        mesh = normalize_mesh(mesh)
    prompts = [(pid, point_prompt(f"marked point {pid}"))
               for pid in sorted(ground_truth)]
    rows = []
    for sigma in sigma_grid:
        for outlier_prob in outlier_grid:
            for views in views_grid:
                for seed in seeds:
                    cell = config.override(views=views, sigma=sigma,
                                           outlier_prob=outlier_prob,
                                           seed=seed)
                    backend = build_backend(cell, ground_truth=ground_truth)
                    outcomes, stats = detect_keypoints(mesh, prompts,
                                                       backend, cell)
                    errors = []
                    misses = 0
                    for outcome in outcomes:
                        if not outcome.predictions:
                            misses += 1
                            continue
                        best = outcome.predictions[0]
                        errors.append(geodesic_distance(
                            mesh, best.anchor,
                            ground_truth[outcome.prompt_id]))
                    rows.append({
                        "sigma": sigma,
                        "outlier_prob": outlier_prob,
                        "views": views,
                        "seed": seed,
                        "prompts": len(prompts),
                        "miss_rate": round(misses / len(prompts), 6)
                        if prompts else 0.0,
                        "mean_error": round(float(np.mean(errors)), 6)
                        if errors else math.inf,
                        "p95_error": round(float(np.percentile(errors, 95)), 6)
                        if errors else math.inf,
                        "degraded_prompts":
                            stats["counts"]["degraded_prompts"],
                    })
    if out_csv:
        _write_rows(out_csv, list(rows[0].keys()), rows)
    return rows
