import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zerokey import (
    NOISE,
    EmptySetError,
    InsufficientPointsError,
    LiftedPoint,
    PointSet,
    TriangleMesh,
    aggregate_hdbscan,
    aggregate_mean,
    core_distance,
    default_min_cluster_size,
    hdbscan,
    make_grid_plane,
    mutual_reachability,
    nearest_surface_point,
)

from conftest import rigid_transform
from oracles import reference_hdbscan, result_as_sets


@pytest.fixture(scope="module")
def big_plane():
    # z=0 plane spanning [-4, 4]^2, so cluster fixtures anchor in place
    return make_grid_plane(8, 4.0)


def point_set(mesh, raws, prompt_id=0, view_ids=None):
    pts = []
    for i, raw in enumerate(np.asarray(raws, dtype=np.float64)):
        sp = nearest_surface_point(mesh, raw)
        vid = int(view_ids[i]) if view_ids is not None else i
        pts.append(LiftedPoint(position=tuple(raw.tolist()), anchor=sp,
                               view_id=vid, prompt_id=prompt_id,
                               patch_support=1,
                               mean_position=tuple(raw.tolist())))
    return PointSet(prompt_id=prompt_id, prompt_text="probe",
                    points=pts, mesh=mesh)


def line_points(xs):
    return np.array([[x, 0.0, 0.0] for x in xs], dtype=np.float64)


# ---------------------------------------------------------------------------
# mean aggregation


def test_aggregate_mean_two_points(big_plane):
    ps = point_set(big_plane, [(0, 0, 0), (2, 0, 0)])
    pred = aggregate_mean(ps)
    assert np.allclose(pred.anchor.xyz, [1.0, 0.0, 0.0], atol=1e-12)
    assert pred.method == "mean"
    assert pred.support == 2


def test_aggregate_mean_single_point(big_plane):
    ps = point_set(big_plane, [(0.5, -0.25, 0.0)])
    pred = aggregate_mean(ps)
    assert np.allclose(pred.anchor.xyz, [0.5, -0.25, 0.0], atol=1e-12)


def test_aggregate_mean_empty(big_plane):
    ps = PointSet(prompt_id=1, prompt_text="x", points=[], mesh=big_plane)
    with pytest.raises(EmptySetError):
        aggregate_mean(ps)


def test_aggregate_mean_support_counts_views(big_plane):
    ps = point_set(big_plane, [(0, 0, 0), (1, 0, 0), (2, 0, 0)],
                   view_ids=[4, 4, 7])
    assert aggregate_mean(ps).support == 2


def test_aggregate_mean_commutes_with_rigid_motion(big_plane):
    rng = np.random.default_rng(21)
    R, t = rigid_transform(rng)
    raws = rng.uniform(-2, 2, size=(8, 3)) * np.array([1, 1, 0])
    moved_mesh = TriangleMesh(big_plane.vertices @ R.T + t, big_plane.faces)

    pred = aggregate_mean(point_set(big_plane, raws))
    moved = aggregate_mean(point_set(moved_mesh, raws @ R.T + t))
    assert np.linalg.norm(moved.anchor.xyz - (pred.anchor.xyz @ R.T + t)) < 1e-9


# ---------------------------------------------------------------------------
# core and mutual reachability distances


def test_core_distance_line_example():
    pts = line_points([0, 1, 3, 7])
    core = core_distance(pts, k=2)
    assert core.tolist() == [3.0, 2.0, 3.0, 6.0]


def test_core_distance_duplicates_zero():
    pts = line_points([5, 5, 9])
    core = core_distance(pts, k=1)
    assert core[0] == 0.0 and core[1] == 0.0
    assert core[2] == 4.0


def test_core_distance_insufficient_points():
    with pytest.raises(InsufficientPointsError):
        core_distance(line_points([0, 1, 2]), k=3)
    with pytest.raises(InsufficientPointsError):
        core_distance(line_points([0]), k=1)


def test_core_distance_bad_k():
    with pytest.raises(ValueError):
        core_distance(line_points([0, 1, 2]), k=0)


def test_mutual_reachability_line_example():
    pts = line_points([0, 1, 3, 7])
    dm = mutual_reachability(pts, k=2)
    # d_m(0,1) = max(core_0, core_1, |0-1|) = max(3, 2, 1)
    assert dm[0, 1] == 3.0
    assert np.all(np.diag(dm) == 0.0)
    assert np.array_equal(dm, dm.T)


def test_mutual_reachability_coincident_zero():
    pts = line_points([2, 2, 8])
    dm = mutual_reachability(pts, k=1)
    assert dm[0, 1] == 0.0


coord = st.floats(min_value=-50.0, max_value=50.0,
                  allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(coord, coord, coord), min_size=4, max_size=20),
       st.integers(min_value=1, max_value=3))
def test_mutual_reachability_bounds(raw, k):
    pts = np.array(raw, dtype=np.float64)
    core = core_distance(pts, k)
    dm = mutual_reachability(pts, k)
    diff = pts[:, None, :] - pts[None, :, :]
    euclid = np.sqrt((diff ** 2).sum(axis=-1))
    off = ~np.eye(len(pts), dtype=bool)
    # the max() makes every bound exact, no tolerance needed
    assert np.all(dm[off] >= euclid[off])
    assert np.all(dm[off] >= core[:, None].repeat(len(pts), 1)[off])
    assert np.all(dm[off] >= core[None, :].repeat(len(pts), 0)[off])
    assert np.array_equal(dm, dm.T)
    assert np.all(np.diag(dm) == 0.0)


# ---------------------------------------------------------------------------
# hdbscan partitions


def two_blobs(rng=None):
    rng = rng or np.random.default_rng(0)
    a = rng.normal(0.0, 0.1, size=(10, 3))
    b = rng.normal(0.0, 0.1, size=(10, 3)) + np.array([10.0, 0.0, 0.0])
    return np.vstack([a, b])


def test_hdbscan_two_blobs():
    pts = two_blobs()
    result = hdbscan(pts, k=3, min_cluster_size=5)
    assert len(result.clusters) == 2
    assert not np.any(result.labels == NOISE)
    groups = {frozenset(np.nonzero(result.labels == c)[0].tolist())
              for c in set(result.labels)}
    assert groups == {frozenset(range(10)), frozenset(range(10, 20))}


def test_hdbscan_fewer_points_than_min_cluster():
    result = hdbscan(line_points([0, 1, 2]), k=2, min_cluster_size=5)
    assert np.all(result.labels == NOISE)
    assert result.clusters == []


def test_hdbscan_all_identical_points():
    pts = np.tile([[1.0, 2.0, 3.0]], (20, 1))
    result = hdbscan(pts, k=3, min_cluster_size=5)
    assert len(result.clusters) == 1
    assert not np.any(result.labels == NOISE)
    assert len(result.clusters[0].members) == 20


def test_hdbscan_cluster_members_match_labels():
    pts = two_blobs(np.random.default_rng(4))
    result = hdbscan(pts, k=3, min_cluster_size=5)
    for idx, info in enumerate(result.clusters):
        assert sorted(info.members) == \
            np.nonzero(result.labels == idx)[0].tolist()


def test_hdbscan_min_cluster_size_is_honored():
    rng = np.random.default_rng(8)
    for trial in range(15):
        n = int(rng.integers(5, 40))
        pts = rng.uniform(-1, 1, size=(n, 3))
        mcs = int(rng.integers(2, 9))
        k = int(rng.integers(2, min(5, n - 1) + 1))
        result = hdbscan(pts, k=k, min_cluster_size=mcs)
        for info in result.clusters:
            assert len(info.members) >= mcs
            assert info.stability >= 0.0


def test_hdbscan_permutation_invariant():
    pts = two_blobs(np.random.default_rng(5))
    base = hdbscan(pts, k=3, min_cluster_size=4)
    rng = np.random.default_rng(6)
    perm = rng.permutation(len(pts))
    permuted = hdbscan(pts[perm], k=3, min_cluster_size=4)

    def as_original_sets(result, index_map):
        return {frozenset(int(index_map[i]) for i in info.members):
                info.stability for info in result.clusters}

    identity = np.arange(len(pts))
    assert as_original_sets(base, identity).keys() == \
        as_original_sets(permuted, perm).keys()
    for members, stab in as_original_sets(base, identity).items():
        assert math.isclose(as_original_sets(permuted, perm)[members], stab,
                            rel_tol=1e-12, abs_tol=1e-12)


def test_hdbscan_rigid_motion_invariant():
    pts = two_blobs(np.random.default_rng(7))
    rng = np.random.default_rng(9)
    R, t = rigid_transform(rng)
    base = hdbscan(pts, k=3, min_cluster_size=4)
    moved = hdbscan(pts @ R.T + t, k=3, min_cluster_size=4)
    as_sets = lambda r: {frozenset(i.members) for i in r.clusters}  # noqa: E731
    assert as_sets(base) == as_sets(moved)
    assert np.array_equal(base.labels == NOISE, moved.labels == NOISE)


def test_default_min_cluster_size():
    assert default_min_cluster_size(1) == 3
    assert default_min_cluster_size(24) == 3
    assert default_min_cluster_size(26) == 4
    assert default_min_cluster_size(64) == 8


# ---------------------------------------------------------------------------
# hdbscan aggregation


def outlier_fixture():
    """20 inliers in a ~0.02 ball around the origin plus 4 far outliers.

    The inliers form two slightly offset sub-clumps, so their merged
    cluster is denser than anything the outliers can join.
    """
    rng = np.random.default_rng(11)
    a = rng.normal(0.0, 0.002, size=(10, 3)) + np.array([0.007, 0.0, 0.0])
    b = rng.normal(0.0, 0.002, size=(10, 3)) - np.array([0.007, 0.0, 0.0])
    outliers = np.array([[1.0, 0.0, 0.0], [0.0, 1.2, 0.0],
                         [-0.9, 0.3, 0.0], [0.2, -1.1, 0.4]])
    return np.vstack([a, b, outliers])


def test_aggregate_hdbscan_ignores_outliers(big_plane):
    pts = outlier_fixture()
    ps = point_set(big_plane, pts)
    preds = aggregate_hdbscan(ps, k=3, min_cluster_size=5, keep="best")
    assert len(preds) == 1
    inlier_centroid = pts[:20].mean(axis=0)
    assert np.linalg.norm(preds[0].anchor.xyz - inlier_centroid) < 0.01
    assert preds[0].method == "hdbscan"
    assert not preds[0].degraded

    labels = hdbscan(pts, k=3, min_cluster_size=5).labels
    assert np.all(labels[20:] == NOISE)


def test_aggregate_hdbscan_keep_all(big_plane):
    rng = np.random.default_rng(12)
    centers = np.array([[2, 2, 0], [-2, 2, 0], [2, -2, 0], [-2, -2, 0]],
                       dtype=np.float64)
    raws = np.vstack([rng.normal(0, 0.01, size=(6, 3)) + c for c in centers])
    ps = point_set(big_plane, raws)
    preds = aggregate_hdbscan(ps, k=3, min_cluster_size=5, keep="all")
    assert len(preds) == 4
    found = np.array(sorted(tuple(np.round(p.anchor.xyz[:2]))
                            for p in preds))
    assert np.array_equal(found, np.array(sorted(map(tuple, centers[:, :2]))))


def test_aggregate_hdbscan_identical_points(big_plane):
    raws = np.tile([[0.25, 0.5, 0.0]], (20, 1))
    preds = aggregate_hdbscan(point_set(big_plane, raws), k=3,
                              min_cluster_size=5)
    assert len(preds) == 1
    assert np.allclose(preds[0].anchor.xyz, [0.25, 0.5, 0.0], atol=1e-12)


def test_aggregate_hdbscan_degraded_fallback(big_plane):
    # three points cannot meet min_cluster_size 5, so everything is noise
    # and the mean answer comes back flagged
    raws = [(0, 0, 0), (1, 0, 0), (0, 1, 0)]
    preds = aggregate_hdbscan(point_set(big_plane, raws), k=2,
                              min_cluster_size=5)
    assert len(preds) == 1
    assert preds[0].degraded
    assert preds[0].method == "hdbscan"
    assert np.allclose(preds[0].anchor.xyz, np.mean(raws, axis=0), atol=1e-12)


def test_aggregate_hdbscan_keep_validation(big_plane):
    ps = point_set(big_plane, [(0, 0, 0), (1, 0, 0)])
    with pytest.raises(ValueError):
        aggregate_hdbscan(ps, keep="some")
    with pytest.raises(EmptySetError):
        aggregate_hdbscan(PointSet(0, "x", [], big_plane))


def test_aggregate_hdbscan_stability_ranks_best(big_plane):
    # a 12-point tight clump beats a looser 6-point one under keep=best
    rng = np.random.default_rng(14)
    tight = rng.normal(0, 0.005, size=(12, 3)) + np.array([2.0, 0, 0])
    loose = rng.normal(0, 0.05, size=(6, 3)) + np.array([-2.0, 0, 0])
    ps = point_set(big_plane, np.vstack([tight, loose]))
    preds = aggregate_hdbscan(ps, k=3, min_cluster_size=5, keep="best")
    assert len(preds) == 1
    assert np.linalg.norm(preds[0].anchor.xyz[:2] - [2.0, 0.0]) < 0.1


# ---------------------------------------------------------------------------
# agreement with the reference implementation


def test_matches_reference_implementation():
    rng = np.random.default_rng(17)
    for trial in range(30):
        n = int(rng.integers(4, 40))
        style = trial % 3
        if style == 0:
            pts = rng.uniform(-1, 1, size=(n, 3))
        elif style == 1:
            centers = rng.uniform(-2, 2, size=(3, 3))
            pts = np.vstack([rng.normal(0, 0.05, size=(max(n // 3, 1), 3)) + c
                             for c in centers])
        else:
            pts = np.round(rng.uniform(-2, 2, size=(n, 3)) * 4) / 4
        k = int(rng.integers(2, 6))
        mcs = int(rng.integers(2, 9))
        if len(pts) <= k:
            continue
        got = result_as_sets(hdbscan(pts, k=k, min_cluster_size=mcs))
        want = reference_hdbscan(pts, k=k, mcs=mcs)
        assert got["noise"] == want["noise"], f"trial {trial}"
        assert set(got["clusters"]) == set(want["clusters"]), f"trial {trial}"
        for members, stab in want["clusters"].items():
            assert math.isclose(got["clusters"][members], stab,
                                rel_tol=1e-9, abs_tol=1e-12), f"trial {trial}"
