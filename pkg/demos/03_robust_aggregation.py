"""Why cluster instead of average: aggregation under outliers.

A noisy detector occasionally points somewhere else entirely.  The mean
of the lifted points is dragged toward those outliers; density
clustering keeps the consensus cluster and labels the rest noise.  This
sweeps the outlier rate and prints both aggregators side by side.
"""

import argparse

import numpy as np

from zerokey import (MockDetectorBackend, MockDetectorConfig, PointSet,
                     RunConfig, aggregate_hdbscan, aggregate_mean,
                     backproject_patch, geodesic_distance, make_cube,
                     nearest_surface_point, normalize_mesh, point_prompt,
                     query_points, render)


def lift_all(mesh, views, backend, prompt_id, prompt):
    points = []
    for view in views:
        for det in query_points(backend, view, prompt, prompt_id):
            cam = view.camera
            lifted = backproject_patch(view, det.pixel(cam.width, cam.height),
                                       patch_size=5, prompt_id=prompt_id)
            if lifted is not None:
                points.append(lifted)
    return PointSet(prompt_id, prompt, points, mesh)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--views", type=int, default=26)
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    mesh = normalize_mesh(make_cube(2.0))
    corners = {i: nearest_surface_point(mesh, v)
               for i, v in enumerate(mesh.vertices)}
    config = RunConfig(views=args.views, width=args.size, height=args.size)
    views = [render(mesh, cam, view_id=i)
             for i, cam in enumerate(config.cameras())]

    print(f"{'outliers':>8s} {'mean err':>10s} {'hdbscan err':>12s} "
          f"{'support':>9s}")
    for rate in (0.0, 0.1, 0.2, 0.4):
        backend = MockDetectorBackend(MockDetectorConfig(
            ground_truth=corners, sigma=2.0, outlier_prob=rate,
            seed=args.seed))
        mean_errs, hdb_errs, supports = [], [], []
        for pid, truth in corners.items():
            point_set = lift_all(mesh, views, backend, pid,
                                 point_prompt(f"corner {pid}"))
            mean_pred = aggregate_mean(point_set)
            best = aggregate_hdbscan(point_set, keep="best",
                                     total_views=args.views)[0]
            mean_errs.append(geodesic_distance(mesh, mean_pred.anchor, truth))
            hdb_errs.append(geodesic_distance(mesh, best.anchor, truth))
            supports.append(best.support)
        print(f"{rate:8.0%} {np.mean(mean_errs):10.4f} "
              f"{np.mean(hdb_errs):12.4f} {np.mean(supports):9.1f}")


if __name__ == "__main__":
    main()
