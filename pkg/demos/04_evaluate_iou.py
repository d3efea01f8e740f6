"""Score predicted keypoints with the geodesic IoU metric.

Predictions and ground truth are matched one-to-one when their on-mesh
geodesic distance falls under a threshold; the IoU at that threshold is
TP / (n_pred + n_gt - TP).  Sweeping the threshold traces how accuracy
accumulates with tolerance.
"""

import argparse

from zerokey import (MockDetectorBackend, MockDetectorConfig, RunConfig,
                     compute_iou, detect_keypoints, make_cube,
                     nearest_surface_point, normalize_mesh, point_prompt)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--views", type=int, default=26)
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--sigma", type=float, default=2.0)
    ap.add_argument("--outlier-prob", type=float, default=0.2)
    ap.add_argument("--csv", help="optionally write the table as CSV")
    args = ap.parse_args()

    mesh = normalize_mesh(make_cube(2.0))
    corners = {i: nearest_surface_point(mesh, v)
               for i, v in enumerate(mesh.vertices)}
    prompts = [(i, point_prompt(f"corner {i}")) for i in corners]
    config = RunConfig(views=args.views, width=args.size, height=args.size)
    backend = MockDetectorBackend(MockDetectorConfig(
        ground_truth=corners, sigma=args.sigma,
        outlier_prob=args.outlier_prob))

    outcomes, _ = detect_keypoints(mesh, prompts, backend, config)
    preds = [p for o in outcomes for p in o.predictions]
    report = compute_iou(mesh, preds, list(corners.values()),
                         model_id="cube")

    print(f"{len(preds)} predictions vs {len(corners)} ground-truth points")
    print(f"{'threshold':>9s} {'matches':>7s} {'iou':>6s}")
    for row in report.rows:
        print(f"{row.threshold:9.3f} {row.true_positives:7d} {row.iou:6.3f}")
    if args.csv:
        report.write_csv(args.csv)
        print(f"wrote {args.csv}")


if __name__ == "__main__":
    main()
