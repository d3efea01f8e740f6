"""Full detection pipeline against the offline mock detector.

The mock stands in for a remote pointing model: it projects known
ground-truth keypoints into each view and answers queries like the real
endpoint would, so the whole render / query / lift / cluster path runs
without a network.
"""

import argparse

from zerokey import (MockDetectorBackend, MockDetectorConfig, RunConfig,
                     geodesic_distance, make_cube, nearest_surface_point,
                     normalize_mesh, point_prompt, run_pipeline)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="demo_run", help="run directory")
    ap.add_argument("--views", type=int, default=26)
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--sigma", type=float, default=1.0,
                    help="detector pixel noise")
    args = ap.parse_args()

    mesh = normalize_mesh(make_cube(2.0))
    corners = {i: nearest_surface_point(mesh, v)
               for i, v in enumerate(mesh.vertices)}
    prompts = [(i, point_prompt(f"corner {i}")) for i in corners]

    config = RunConfig(views=args.views, width=args.size, height=args.size,
                       sigma=args.sigma)
    backend = MockDetectorBackend(MockDetectorConfig(
        ground_truth=corners, sigma=args.sigma))
    result = run_pipeline(config, backend=backend, mesh=mesh,
                          prompts=prompts, out_dir=args.out)

    print(f"{'prompt':24s} {'support':>7s} {'geodesic error':>14s}")
    for outcome in result.outcomes:
        best = outcome.predictions[0]
        err = geodesic_distance(mesh, best.anchor,
                                corners[outcome.prompt_id])
        print(f"{outcome.prompt_text[:24]:24s} {best.support:7d} "
              f"{err:14.5f}")
    counts = result.manifest["counts"]
    print(f"\n{counts['detections']} detections over {counts['views']} "
          f"views -> {counts['keypoints']} keypoints")
    print(f"predictions: {result.predictions_path}")


if __name__ == "__main__":
    main()
