"""Score predicted keypoints against annotations and close the loop.

Matching is geodesic: a prediction counts as a true positive when some
unmatched ground-truth point lies strictly within the distance threshold
along the surface.  Matching is greedy on ascending distance with fixed
index tie-breaks, so results are reproducible bit for bit.  The score is
intersection over union,

    IoU = TP / (n_predicted + n_ground_truth - TP),

reported over a fixed threshold grid so curves from different runs line
up.  Reports from several models merge by summing the raw counts before
the ratio, never by averaging per-model IoU.

The round-trip check asks the opposite question: given a detected
keypoint, can a namer describe it well enough that re-detecting from the
description lands back where it started?
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .backproject import backproject_patch
from .cluster import KeypointPrediction, PointSet, aggregate_hdbscan
from .detector import DetectorBackend, NamerBackend, point_prompt, query_points
from .errors import (ConfigError, EmptyGroundTruthError,
                     MarkerInvisibleError, MeshMismatchError)
from .mesh import (SurfacePoint, TriangleMesh, nearest_surface_point,
                   pairwise_geodesic)
from .render import generate_views, render, render_with_marker

__all__ = [
    "DEFAULT_THRESHOLDS",
    "EvalReport",
    "GroundTruthSet",
    "IoURow",
    "RoundTripResult",
    "compute_iou",
    "describability_roundtrip",
    "load_ground_truth",
    "merge_reports",
    "roundtrip_curve",
    "write_curve_csv",
]

# 1 mm-scale probe plus a 1 cm ladder, in normalized model units
DEFAULT_THRESHOLDS = (0.001, 0.01, 0.02, 0.03, 0.04, 0.05,
                      0.06, 0.07, 0.08, 0.09, 0.10)


# ---------------------------------------------------------------------------
# ground truth


@dataclass
class GroundTruthSet:
    """Annotated keypoints snapped onto a specific mesh."""

    mesh: TriangleMesh
    keypoints: dict[int, SurfacePoint]
    model_id: str | None = None
    warnings: list[str] = field(default_factory=list)

    def points(self) -> list[SurfacePoint]:
        return [self.keypoints[i] for i in sorted(self.keypoints)]

    def ids(self) -> list[int]:
        return sorted(self.keypoints)


_SNAP_WARN = 0.01
_SNAP_REJECT = 0.05


def load_ground_truth(path, mesh: TriangleMesh) -> GroundTruthSet:
    """Read annotations from JSON and snap them onto the mesh surface.

    Each keypoint carries an integer id and either an explicit "xyz"
    position or a "vertex_index" into the mesh.  Positions more than 0.01
    off the surface produce a warning; more than 0.05 raises
    MeshMismatchError since the annotation clearly belongs to a different
    mesh or normalization.
    """
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    raw = data.get("keypoints")
    if not isinstance(raw, list):
        raise MeshMismatchError(f"{path}: no keypoints array")

    keypoints: dict[int, SurfacePoint] = {}
    warnings: list[str] = []
    for item in raw:
        kp_id = int(item["id"])
        if kp_id in keypoints:
            raise MeshMismatchError(f"{path}: duplicate keypoint id {kp_id}")
        if "vertex_index" in item:
            vi = int(item["vertex_index"])
            if not 0 <= vi < len(mesh.vertices):
                raise MeshMismatchError(
                    f"{path}: vertex_index {vi} outside mesh "
                    f"({len(mesh.vertices)} vertices)")
            target = mesh.vertices[vi]
        elif "xyz" in item:
            target = np.asarray(item["xyz"], dtype=np.float64)
            if target.shape != (3,):
                raise MeshMismatchError(
                    f"{path}: keypoint {kp_id} xyz must have 3 components")
        else:
            raise MeshMismatchError(
                f"{path}: keypoint {kp_id} needs xyz or vertex_index")
        snapped = nearest_surface_point(mesh, target)
        off = float(np.linalg.norm(snapped.xyz - target))
        if off > _SNAP_REJECT:
            raise MeshMismatchError(
                f"{path}: keypoint {kp_id} lies {off:.4f} off the surface")
        if off > _SNAP_WARN:
            warnings.append(
                f"keypoint {kp_id} snapped {off:.4f} onto the surface")
        keypoints[kp_id] = snapped
    return GroundTruthSet(mesh=mesh, keypoints=keypoints,
                          model_id=data.get("model_id"), warnings=warnings)


# ---------------------------------------------------------------------------
# IoU


@dataclass(frozen=True)
class IoURow:
    threshold: float
    true_positives: int
    n_predicted: int
    n_ground_truth: int

    @property
    def iou(self) -> float:
        denom = self.n_predicted + self.n_ground_truth - self.true_positives
        return self.true_positives / denom if denom else 0.0


@dataclass
class EvalReport:
    rows: list[IoURow]
    model_id: str | None = None
    # mean edge length bounds geodesic resolution, so it rides along as a
    # caveat next to the normalization convention and aggregation params
    metadata: dict = field(default_factory=dict)
    per_model: dict[str, list[IoURow]] = field(default_factory=dict)

    def thresholds(self) -> list[float]:
        return [r.threshold for r in self.rows]

    def iou_at(self, threshold: float) -> float:
        for row in self.rows:
            if row.threshold == threshold:
                return row.iou
        raise KeyError(f"no row at threshold {threshold}")

    def to_dict(self) -> dict:
        def row_dicts(rows):
            return [{"threshold": r.threshold,
                     "true_positives": r.true_positives,
                     "n_predicted": r.n_predicted,
                     "n_ground_truth": r.n_ground_truth,
                     "iou": r.iou} for r in rows]

        out = {
            "model_id": self.model_id,
            "metadata": self.metadata,
            "rows": row_dicts(self.rows),
        }
        if self.per_model:
            out["per_model"] = {m: row_dicts(rows)
                                for m, rows in self.per_model.items()}
        return out

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "true_positives", "n_predicted",
                             "n_ground_truth", "iou"])
            for r in self.rows:
                writer.writerow([r.threshold, r.true_positives, r.n_predicted,
                                 r.n_ground_truth, f"{r.iou:.6f}"])


def _as_surface_points(items) -> list[SurfacePoint]:
    out = []
    for item in items:
        if isinstance(item, KeypointPrediction):
            out.append(item.anchor)
        elif isinstance(item, SurfacePoint):
            out.append(item)
        else:
            raise TypeError(f"expected SurfacePoint or KeypointPrediction, "
                            f"got {type(item).__name__}")
    return out


def compute_iou(mesh: TriangleMesh, predicted, ground_truth,
                thresholds=DEFAULT_THRESHOLDS,
                model_id: str | None = None,
                aggregation: dict | None = None) -> EvalReport:
    """Greedy geodesic matching at each threshold.

    Candidate pairs must be strictly closer than the threshold.  Pairs
    match in ascending (distance, predicted index, ground-truth index)
    order, each side at most once.  Empty predictions give zero rows;
    empty ground truth raises EmptyGroundTruthError because the ratio is
    meaningless without annotations.  aggregation, when given, is echoed
    into the report metadata so numbers stay traceable to their settings.
    """
    if isinstance(ground_truth, GroundTruthSet):
        gt = ground_truth.points()
    else:
        gt = _as_surface_points(ground_truth)
    if not gt:
        raise EmptyGroundTruthError("no ground-truth keypoints to match")
    preds = _as_surface_points(predicted)
    thresholds = [float(t) for t in thresholds]

    pairs: list[tuple[float, int, int]] = []
    if preds:
        dist = pairwise_geodesic(mesh, preds, gt)
        for i in range(len(preds)):
            for j in range(len(gt)):
                d = float(dist[i, j])
                if math.isfinite(d):
                    pairs.append((d, i, j))
        pairs.sort()

    rows = []
    for tau in thresholds:
        used_p: set[int] = set()
        used_g: set[int] = set()
        tp = 0
        for d, i, j in pairs:
            if d >= tau:
                break
            if i in used_p or j in used_g:
                continue
            used_p.add(i)
            used_g.add(j)
            tp += 1
        rows.append(IoURow(threshold=tau, true_positives=tp,
                           n_predicted=len(preds), n_ground_truth=len(gt)))

    metadata = {"mean_edge_length": mesh.mean_edge_length()}
    if mesh.normalization is not None:
        metadata["normalization"] = mesh.normalization.convention
    if aggregation is not None:
        metadata["aggregation"] = dict(aggregation)
    return EvalReport(rows=rows, model_id=model_id, metadata=metadata)


def merge_reports(reports: list[EvalReport],
                  model_id: str | None = None) -> EvalReport:
    """Pool reports by summing counts per threshold, then re-dividing.

    All reports must share one threshold grid.  This weights models by
    their keypoint counts, matching how a single big report would come
    out, instead of giving tiny models equal say.
    """
    if not reports:
        raise ValueError("nothing to merge")
    grid = reports[0].thresholds()
    for rep in reports[1:]:
        if rep.thresholds() != grid:
            raise ValueError("reports use different threshold grids")
    rows = []
    for idx, tau in enumerate(grid):
        rows.append(IoURow(
            threshold=tau,
            true_positives=sum(r.rows[idx].true_positives for r in reports),
            n_predicted=sum(r.rows[idx].n_predicted for r in reports),
            n_ground_truth=sum(r.rows[idx].n_ground_truth for r in reports)))

    per_model: dict[str, list[IoURow]] = {}
    for pos, rep in enumerate(reports):
        per_model[rep.model_id or f"model-{pos}"] = list(rep.rows)
    return EvalReport(rows=rows, model_id=model_id, per_model=per_model)


# ---------------------------------------------------------------------------
# describability round-trip


@dataclass
class RoundTripResult:
    """Outcome of describe-then-redetect for one keypoint."""

    label: str
    prediction: KeypointPrediction | None
    error: float                      # Euclidean gap, inf when nothing came back
    votes: list[str] = field(default_factory=list)
    visible_views: int = 0


def describability_roundtrip(mesh: TriangleMesh, keypoint: SurfacePoint,
                             namer: NamerBackend, backend: DetectorBackend,
                             *, namer_views: int = 4, detect_views: int = 26,
                             width: int = 256, height: int = 256,
                             patch_size: int = 5, k: int = 3,
                             min_cluster_size: int | None = None,
                             marker_radius: int = 6,
                             prompt_id: int = 0) -> RoundTripResult:
    """Name a marked keypoint, re-detect from the name, measure the gap.

    The keypoint is rendered with a marker disc from namer_views
    directions; each view where the marker survives the depth test gets
    one naming vote, and the majority label wins (ties break to the
    lexicographically smallest).  MarkerInvisibleError means the marker
    was hidden in every view, so the keypoint cannot be described at all.
    The label is then turned into a point prompt and run through the
    full per-view detect / lift / cluster path.  A detector that never
    answers yields error = inf rather than an exception, since "cannot
    be re-found" is a legitimate measurement.

    prompt_id is what the re-detection queries carry; offline backends
    that key their answers on ids need it to point at this keypoint.
    """
    marker_cams = generate_views(namer_views, width=width, height=height)
    votes = []
    for vid, cam in enumerate(marker_cams):
        view = render_with_marker(mesh, cam, keypoint, radius=marker_radius,
                                  view_id=vid)
        if view.marker_visible:
            votes.append(namer.describe(view).strip())
    if not votes:
        raise MarkerInvisibleError(
            f"marker hidden in all {namer_views} views")
    counts = Counter(votes)
    top = max(counts.values())
    label = min(v for v, c in counts.items() if c == top)

    prompt = point_prompt(label)
    cams = generate_views(detect_views, width=width, height=height)
    lifted = []
    for vid, cam in enumerate(cams):
        view = render(mesh, cam, view_id=vid)
        for det in query_points(backend, view, prompt, prompt_id=prompt_id):
            lp = backproject_patch(view, det.pixel(width, height),
                                   patch_size=patch_size, view_id=vid,
                                   prompt_id=prompt_id)
            if lp is not None:
                lifted.append(lp)
    if not lifted:
        return RoundTripResult(label=label, prediction=None, error=math.inf,
                               votes=votes, visible_views=len(votes))

    point_set = PointSet(prompt_id=prompt_id, prompt_text=prompt,
                         points=lifted, mesh=mesh)
    prediction = aggregate_hdbscan(point_set, k=k,
                                   min_cluster_size=min_cluster_size,
                                   keep="best", total_views=detect_views)[0]
    error = float(np.linalg.norm(prediction.anchor.xyz - keypoint.xyz))
    return RoundTripResult(label=label, prediction=prediction, error=error,
                           votes=votes, visible_views=len(votes))


def roundtrip_curve(errors, thresholds=DEFAULT_THRESHOLDS):
    """Fraction of round trips landing under each threshold.

    Failed trips (error = inf) stay in the denominator: a point the
    detector cannot re-find counts against describability at every
    threshold, which is the comparison the curve exists to make.
    """
    errors = [float(e) for e in errors]
    if not errors:
        raise ValueError("no round-trip errors to summarize")
    return [(float(tau), sum(e < tau for e in errors) / len(errors))
            for tau in thresholds]


def write_curve_csv(path, curve) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fraction"])
        for tau, frac in curve:
            writer.writerow([tau, f"{frac:.6f}"])
