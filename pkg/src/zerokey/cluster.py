"""Aggregate lifted per-view points into 3D keypoints.

Per-view detections of one prompt form a cloud on the surface: a dense
clump near the true location plus stragglers from occlusion boundaries
and detector outliers.  Direct averaging is pulled by the stragglers, so
the default aggregator clusters with a density-based hierarchy over the
mutual-reachability metric

    d_m(a, b) = max(core_k(a), core_k(b), |a - b|)

with core_k the distance to the k-th nearest neighbor, and keeps cluster
centroids instead.

The clustering is implemented here from first principles and pinned down
to deterministic tie handling so a brute-force reference can reproduce
it exactly:

  1. complete mutual-reachability graph;
  2. minimum spanning tree, ties broken by (min index, max index);
  3. single-linkage hierarchy, edges grouped by exactly-equal weight so
     simultaneous merges become one multiway event;
  4. condensation with a minimum cluster size: a split whose child falls
     below the minimum is a fall-out event, not a split;
  5. cluster stability = sum over members of (1/w_fallout - 1/w_birth),
     summed with math.fsum so ordering cannot perturb comparisons;
  6. selection maximizing total stability with no selected cluster an
     ancestor of another; the root is a valid candidate, so a set that
     never truly splits still yields one cluster.  A cluster's members
     are every point that fell out of it or out of an unselected
     descendant; points that fell out above all selected clusters are
     noise.  When the selection is the root itself, its direct
     fall-outs count only from the root's final dissolve level, which
     is what lets stragglers be noise in a one-cluster answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .backproject import LiftedPoint
from .errors import EmptySetError, InsufficientPointsError
from .mesh import SurfacePoint, TriangleMesh, nearest_surface_point

__all__ = [
    "NOISE",
    "ClusterInfo",
    "ClusterResult",
    "KeypointPrediction",
    "PointSet",
    "aggregate_hdbscan",
    "aggregate_mean",
    "core_distance",
    "default_min_cluster_size",
    "hdbscan",
    "mutual_reachability",
]

NOISE = -1


@dataclass
class PointSet:
    """All lifted points for one prompt, plus the mesh they live on."""

    prompt_id: int
    prompt_text: str
    points: list[LiftedPoint]
    mesh: TriangleMesh

    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.points], dtype=np.float64) \
            if self.points else np.zeros((0, 3))

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class ClusterInfo:
    members: tuple[int, ...]
    stability: float


@dataclass
class ClusterResult:
    """Labels per point (NOISE = -1) and the selected clusters."""

    labels: np.ndarray
    clusters: list[ClusterInfo]
    k: int
    min_cluster_size: int


@dataclass(frozen=True)
class KeypointPrediction:
    """A named 3D keypoint with its aggregation provenance."""

    prompt_id: int
    prompt_text: str
    anchor: SurfacePoint
    stability: float
    support: int                 # distinct views among contributing points
    method: str                  # "mean" or "hdbscan"
    degraded: bool = False


# ---------------------------------------------------------------------------
# metric


def _euclidean_matrix(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


def core_distance(points, k: int) -> np.ndarray:
    """Distance from each point to its k-th nearest other point.

    Needs k >= 1 and more than k points; coincident points give 0.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n <= k:
        raise InsufficientPointsError(
            f"core distance with k={k} needs at least {k + 1} points, got {n}")
    dist = _euclidean_matrix(points)
    ordered = np.sort(dist, axis=1)
    # column 0 is the self distance, so the k-th other sits at column k
    return ordered[:, k]


def mutual_reachability(points, k: int) -> np.ndarray:
    """Symmetric mutual-reachability matrix with a zero diagonal."""
    points = np.asarray(points, dtype=np.float64)
    dist = _euclidean_matrix(points)
    core = core_distance(points, k)
    dm = np.maximum(dist, np.maximum(core[:, None], core[None, :]))
    np.fill_diagonal(dm, 0.0)
    return dm


# ---------------------------------------------------------------------------
# hierarchy


def _mst_edges(dm: np.ndarray) -> list[tuple[float, int, int]]:
    """Kruskal over the complete graph; ties break on (min, max) index."""
    n = len(dm)
    iu, ju = np.triu_indices(n, k=1)
    w = dm[iu, ju]
    order = np.lexsort((ju, iu, w))
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges = []
    for idx in order:
        a, b = int(iu[idx]), int(ju[idx])
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            edges.append((float(w[idx]), a, b))
            if len(edges) == n - 1:
                break
    return edges


class _MergeTree:
    """Multiway single-linkage dendrogram over the MST.

    Leaves are points 0..n-1; internal nodes carry the merge weight and
    their children.  Equal-weight MST edges collapse into one event, so
    exact ties (duplicate points) do not create artificial binary splits.
    """

    def __init__(self, n: int):
        self.n = n
        self.children: list[list[int]] = [[] for _ in range(n)]
        self.weight: list[float] = [0.0] * n
        self.size: list[int] = [1] * n
        self.root = -1

    def leaves_under(self, node: int) -> list[int]:
        stack, out = [node], []
        while stack:
            x = stack.pop()
            if x < self.n:
                out.append(x)
            else:
                stack.extend(self.children[x])
        return out


def _single_linkage(edges: list[tuple[float, int, int]], n: int) -> _MergeTree:
    tree = _MergeTree(n)
    parent_node = list(range(n))  # tree node -> enclosing node (self at top)
    top = list(range(n))          # point -> cached topmost node

    def current(p):
        x = top[p]
        while parent_node[x] != x:
            x = parent_node[x]
        top[p] = x
        return x

    i = 0
    while i < len(edges):
        w = edges[i][0]
        group = []
        while i < len(edges) and edges[i][0] == w:
            group.append(edges[i])
            i += 1
        # nodes touched by this weight group and their adjacency
        adj: dict[int, set[int]] = {}
        for _, a, b in group:
            na, nb = current(a), current(b)
            adj.setdefault(na, set()).add(nb)
            adj.setdefault(nb, set()).add(na)
        visited: set[int] = set()
        for start in sorted(adj):
            if start in visited:
                continue
            stack, block = [start], []
            visited.add(start)
            while stack:
                x = stack.pop()
                block.append(x)
                for y in adj[x]:
                    if y not in visited:
                        visited.add(y)
                        stack.append(y)
            if len(block) < 2:
                continue
            node = len(tree.children)
            block = sorted(block)
            tree.children.append(block)
            tree.weight.append(w)
            tree.size.append(sum(tree.size[b] for b in block))
            parent_node.append(node)
            for b in block:
                parent_node[b] = node
    tree.root = current(0)
    return tree


# ---------------------------------------------------------------------------
# condensation and selection


@dataclass
class _CondensedCluster:
    birth_w: float
    parent: int
    point_events: list[tuple[int, float]] = field(default_factory=list)
    child_events: list[tuple[int, float, int]] = field(default_factory=list)
    stability: float = 0.0


def _lambda(w: float) -> float:
    if w == math.inf:
        return 0.0
    if w == 0.0:
        return math.inf
    return 1.0 / w


def _condense(tree: _MergeTree, min_cluster_size: int) -> list[_CondensedCluster]:
    clusters = [_CondensedCluster(birth_w=math.inf, parent=-1)]
    stack = [(tree.root, 0)]
    while stack:
        node, cid = stack.pop()
        w = tree.weight[node]
        kids = tree.children[node]
        big = [c for c in kids if tree.size[c] >= min_cluster_size]
        small = [c for c in kids if tree.size[c] < min_cluster_size]
        cluster = clusters[cid]
        for c in small:
            for p in tree.leaves_under(c):
                cluster.point_events.append((p, w))
        if len(big) == 1:
            stack.append((big[0], cid))
        elif len(big) >= 2:
            for c in big:
                child_id = len(clusters)
                clusters.append(_CondensedCluster(birth_w=w, parent=cid))
                cluster.child_events.append((child_id, w, tree.size[c]))
                stack.append((c, child_id))
        # len(big) == 0: the cluster dissolved; everything already fell out
    for cluster in clusters:
        birth = _lambda(cluster.birth_w)
        contribs = [_lambda(w) - birth for _, w in cluster.point_events]
        contribs += [(_lambda(w) - birth) * size
                     for _, w, size in cluster.child_events]
        cluster.stability = math.fsum(contribs)
    return clusters


def _select_excess_of_mass(clusters: list[_CondensedCluster]) -> set[int]:
    children: dict[int, list[int]] = {i: [] for i in range(len(clusters))}
    for i, c in enumerate(clusters):
        if c.parent >= 0:
            children[c.parent].append(i)
    value = [0.0] * len(clusters)
    chosen: list[set[int]] = [set() for _ in range(len(clusters))]
    for i in reversed(range(len(clusters))):
        kids = children[i]
        if kids:
            kid_sum = math.fsum(value[k] for k in kids)
            if kid_sum > clusters[i].stability:
                value[i] = kid_sum
                chosen[i] = set().union(*(chosen[k] for k in kids))
                continue
        value[i] = clusters[i].stability
        chosen[i] = {i}
    return chosen[0]


def _assign_labels(clusters: list[_CondensedCluster], selected: set[int],
                   n: int) -> tuple[np.ndarray, list[ClusterInfo]]:
    # nearest selected ancestor-or-self per condensed cluster; points
    # keep the label of the selected cluster they fell out of (directly
    # or via an unselected descendant), and points that fell out above
    # every selected cluster are noise
    owner = [-1] * len(clusters)
    for i, c in enumerate(clusters):
        if i in selected:
            owner[i] = i
        elif c.parent >= 0:
            owner[i] = owner[c.parent]

    # The root can only be selected alone (it is an ancestor of all).
    # Then there is no unselected ancestor left to absorb stragglers, so
    # its direct fall-outs only count as members if they persisted to
    # the root's last event; earlier fall-outs stay noise.  Without this
    # a lone far outlier could never be noise.
    root_only = selected == {0}
    if root_only:
        events = [_lambda(w) for _, w in clusters[0].point_events]
        events += [_lambda(w) for _, w, _ in clusters[0].child_events]
        final_lambda = max(events) if events else math.inf

    labels = np.full(n, NOISE, dtype=np.int64)
    ordered = sorted(selected)
    index_of = {cid: i for i, cid in enumerate(ordered)}
    members: list[list[int]] = [[] for _ in ordered]
    for i, c in enumerate(clusters):
        target = owner[i]
        if target < 0:
            continue
        for p, w in c.point_events:
            if root_only and i == 0 and _lambda(w) < final_lambda:
                continue
            labels[p] = index_of[target]
            members[index_of[target]].append(p)

    infos = [ClusterInfo(tuple(sorted(members[index_of[cid]])),
                         clusters[cid].stability) for cid in ordered]
    return labels, infos


def hdbscan(points, k: int = 3, min_cluster_size: int = 3) -> ClusterResult:
    """Density-based hierarchical clustering of a 3D point cloud.

    Deterministic for a given input; sets with too few points for the
    neighborhood size or the minimum cluster size come back all noise
    rather than raising, since tiny sets are an expected runtime case.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or (len(points) and points.shape[1] != 3):
        raise ValueError(f"points must be (n, 3), got {points.shape}")
    if len(points) == 0:
        raise EmptySetError("cannot cluster an empty point set")
    if k < 1 or min_cluster_size < 2:
        raise ValueError(
            f"need k >= 1 and min cluster size >= 2, got {k}, {min_cluster_size}")
    n = len(points)
    if n <= k or n < min_cluster_size:
        return ClusterResult(labels=np.full(n, NOISE, dtype=np.int64),
                             clusters=[], k=k,
                             min_cluster_size=min_cluster_size)

    dm = mutual_reachability(points, k)
    tree = _single_linkage(_mst_edges(dm), n)
    condensed = _condense(tree, min_cluster_size)
    selected = _select_excess_of_mass(condensed)
    labels, infos = _assign_labels(condensed, selected, n)
    return ClusterResult(labels=labels, clusters=infos, k=k,
                         min_cluster_size=min_cluster_size)


# ---------------------------------------------------------------------------
# aggregation


def default_min_cluster_size(total_views: int) -> int:
    return max(3, math.ceil(total_views / 8))


def _support(points: list[LiftedPoint]) -> int:
    return len({p.view_id for p in points})


def aggregate_mean(point_set: PointSet) -> KeypointPrediction:
    """Centroid of all lifted points, re-anchored to the surface."""
    if len(point_set) == 0:
        raise EmptySetError(
            f"prompt {point_set.prompt_id} has no lifted points")
    mean = point_set.positions().mean(axis=0)
    anchor = nearest_surface_point(point_set.mesh, mean)
    return KeypointPrediction(
        prompt_id=point_set.prompt_id, prompt_text=point_set.prompt_text,
        anchor=anchor, stability=1.0, support=_support(point_set.points),
        method="mean")


def aggregate_hdbscan(point_set: PointSet, k: int = 3,
                      min_cluster_size: int | None = None,
                      keep: str = "best",
                      total_views: int | None = None
                      ) -> list[KeypointPrediction]:
    """Cluster the lifted points and keep cluster centroids as keypoints.

    min_cluster_size defaults to max(3, ceil(total_views / 8)).  keep
    chooses between the single most stable cluster ("best") and every
    selected cluster ("all", for multi-instance prompts).  When
    everything is labeled noise the mean aggregate is returned instead,
    flagged degraded, so the prompt still gets an answer.
    """
    if keep not in ("best", "all"):
        raise ValueError(f"keep must be 'best' or 'all', got {keep!r}")
    if len(point_set) == 0:
        raise EmptySetError(
            f"prompt {point_set.prompt_id} has no lifted points")
    if min_cluster_size is None:
        views = total_views if total_views is not None \
            else _support(point_set.points)
        min_cluster_size = default_min_cluster_size(views)

    result = hdbscan(point_set.positions(), k=k,
                     min_cluster_size=min_cluster_size)
    if not result.clusters:
        fallback = aggregate_mean(point_set)
        return [KeypointPrediction(
            prompt_id=fallback.prompt_id, prompt_text=fallback.prompt_text,
            anchor=fallback.anchor, stability=fallback.stability,
            support=fallback.support, method="hdbscan", degraded=True)]

    ranked = sorted(result.clusters,
                    key=lambda c: (-c.stability, c.members[0]))
    if keep == "best":
        ranked = ranked[:1]

    predictions = []
    for info in ranked:
        member_points = [point_set.points[i] for i in info.members]
        centroid = np.array([p.position for p in member_points]).mean(axis=0)
        anchor = nearest_surface_point(point_set.mesh, centroid)
        predictions.append(KeypointPrediction(
            prompt_id=point_set.prompt_id, prompt_text=point_set.prompt_text,
            anchor=anchor, stability=info.stability,
            support=_support(member_points), method="hdbscan"))
    return predictions
