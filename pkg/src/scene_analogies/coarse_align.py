"""Cluster object matches and fit one affine map per cluster.

Matches are clustered by their 3D translation vectors (reference centroid
minus target centroid) with DBSCAN; noise matches are promoted to singleton
clusters so no matched object loses its map.  Each cluster gets a
least-squares fit with a fallback ladder (affine -> similarity ->
translation) keyed on member count and geometric degeneracy, and every
target object is assigned the map of its own or nearest cluster.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph_builder import SceneGraph
from .graph_matcher import MatchPair, MatchSet
from .scene_model import SceneBundle

DEFAULT_CLUSTER_EPS = 0.75
DEFAULT_CLUSTER_MIN_PTS = 2
DEGENERACY_TOL = 1e-6


@dataclass(frozen=True)
class MatchCluster:
    cluster_id: int  # -1 marks a singleton promoted from DBSCAN noise
    members: tuple[MatchPair, ...]


@dataclass(frozen=True)
class AffineMap:
    A: np.ndarray  # (3, 3)
    b: np.ndarray  # (3,)
    kind: str  # affine | similarity | translation | identity

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            return self.A @ points + self.b
        return points @ self.A.T + self.b


def identity_affine() -> AffineMap:
    return AffineMap(A=np.eye(3), b=np.zeros(3), kind="identity")


def dbscan(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Density-based cluster labels; -1 for noise.

    Core points have >= min_pts neighbors within eps (inclusive, counting
    themselves); clusters are the connected components of the core graph,
    numbered by first appearance in input order.  Non-core points join the
    cluster of their nearest core neighbor within eps (ties broken by the
    core's lexicographically smallest position, so the labeling is
    permutation-invariant up to renumbering); unreachable points are noise.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if min_pts < 1:
        raise ValueError(f"min_pts must be >= 1, got {min_pts}")
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = pts.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64)

    diff = pts[:, None, :] - pts[None, :, :]
    within = np.einsum("ijk,ijk->ij", diff, diff) <= eps * eps
    core = within.sum(axis=1) >= min_pts

    labels = np.full(n, -1, dtype=np.int64)
    next_label = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != -1:
            continue
        # Flood the core component containing `seed`.
        stack = [seed]
        labels[seed] = next_label
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(within[i] & core):
                if labels[j] == -1:
                    labels[j] = next_label
                    stack.append(int(j))
        next_label += 1

    for i in range(n):
        if core[i] or labels[i] != -1:
            continue
        reachable = np.flatnonzero(within[i] & core)
        if reachable.size == 0:
            continue
        dists = np.linalg.norm(pts[reachable] - pts[i], axis=1)
        best = dists.min()
        tied = reachable[dists == best]
        pick = min(tied, key=lambda j: tuple(pts[j]))
        labels[i] = labels[pick]
    return labels


def cluster_matches(
    matches: MatchSet,
    g_tgt: SceneGraph,
    g_ref: SceneGraph,
    eps: float = DEFAULT_CLUSTER_EPS,
    min_pts: int = DEFAULT_CLUSTER_MIN_PTS,
) -> list[MatchCluster]:
    """DBSCAN over per-match translation vectors; noise becomes singletons."""
    if len(matches) == 0:
        return []
    tgt_centroids = {n.object_id: n.centroid for n in g_tgt.nodes}
    ref_centroids = {n.object_id: n.centroid for n in g_ref.nodes}
    translations = np.array(
        [
            ref_centroids[p.reference_id] - tgt_centroids[p.target_id]
            for p in matches.pairs
        ]
    )
    labels = dbscan(translations, eps=eps, min_pts=min_pts)
    clusters: list[MatchCluster] = []
    for label in sorted(set(labels[labels >= 0])):
        members = tuple(p for p, l in zip(matches.pairs, labels) if l == label)
        clusters.append(MatchCluster(cluster_id=int(label), members=members))
    for pair, label in zip(matches.pairs, labels):
        if label == -1:
            clusters.append(MatchCluster(cluster_id=-1, members=(pair,)))
    return clusters


def fit_affine(
    cluster: MatchCluster, g_tgt: SceneGraph, g_ref: SceneGraph
) -> AffineMap:
    """Least-squares centroid fit with a degeneracy fallback ladder.

    >= 4 members spanning 3D -> full affine; 3 members (or a degenerate
    spread) -> similarity via Umeyama; fewer -> translation by the mean
    centroid difference.  Each rung is accepted only if it produces a finite
    map with |det A| above DEGENERACY_TOL, so callers always receive an
    invertible transform.
    """
    if not cluster.members:
        raise ValueError("cannot fit an affine map to an empty cluster")
    tgt_centroids = {n.object_id: n.centroid for n in g_tgt.nodes}
    ref_centroids = {n.object_id: n.centroid for n in g_ref.nodes}
    x = np.array([tgt_centroids[p.target_id] for p in cluster.members])
    y = np.array([ref_centroids[p.reference_id] for p in cluster.members])
    n = x.shape[0]

    if n >= 4 and _spread_ok(x):
        fit = _fit_full_affine(x, y)
        if fit is not None:
            return fit
    if n >= 3:
        fit = _fit_similarity(x, y)
        if fit is not None:
            return fit
    b = (y - x).mean(axis=0)
    return AffineMap(A=np.eye(3), b=b, kind="translation")


def _spread_ok(x: np.ndarray) -> bool:
    centered = (x - x.mean(axis=0)).T  # 3 x N
    return float(np.linalg.svd(centered, compute_uv=False)[-1]) > DEGENERACY_TOL


def _accept(A: np.ndarray, b: np.ndarray, kind: str) -> AffineMap | None:
    if not (np.isfinite(A).all() and np.isfinite(b).all()):
        return None
    if abs(float(np.linalg.det(A))) <= DEGENERACY_TOL:
        return None
    return AffineMap(A=A, b=b, kind=kind)


def _fit_full_affine(x: np.ndarray, y: np.ndarray) -> AffineMap | None:
    h = np.hstack([x, np.ones((x.shape[0], 1))])
    coef, *_ = np.linalg.lstsq(h, y, rcond=None)  # (4, 3)
    return _accept(coef[:3].T, coef[3], "affine")


def _fit_similarity(x: np.ndarray, y: np.ndarray) -> AffineMap | None:
    """Umeyama: rotation + uniform scale + translation minimizing the
    squared centroid residual."""
    n = x.shape[0]
    mx = x.mean(axis=0)
    my = y.mean(axis=0)
    xc = x - mx
    yc = y - my
    var_x = float(np.einsum("ij,ij->", xc, xc)) / n
    if var_x <= DEGENERACY_TOL**2:
        return None
    cov = yc.T @ xc / n
    u, d, vt = np.linalg.svd(cov)
    s = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[-1] = -1.0
    rot = u @ np.diag(s) @ vt
    scale = float(np.dot(d, s)) / var_x
    A = scale * rot
    return _accept(A, my - A @ mx, "similarity")


def assign_object_maps(
    scene_tgt: SceneBundle,
    clusters: list[MatchCluster],
    fits: list[AffineMap],
    g_tgt: SceneGraph,
    g_ref: SceneGraph,
) -> dict[str, AffineMap]:
    """Matched objects take their cluster's map; unmatched objects take the
    map of the cluster with the nearest member centroid; identity if there
    are no clusters at all."""
    if len(clusters) != len(fits):
        raise ValueError("fits must align with clusters index-wise")
    out: dict[str, AffineMap] = {}
    if not clusters:
        return {o.object_id: identity_affine() for o in scene_tgt.objects}

    tgt_centroids = {n.object_id: n.centroid for n in g_tgt.nodes}
    by_member: dict[str, int] = {}
    member_positions: list[tuple[int, np.ndarray]] = []
    for ci, cluster in enumerate(clusters):
        for pair in cluster.members:
            by_member[pair.target_id] = ci
            member_positions.append((ci, tgt_centroids[pair.target_id]))

    for obj in scene_tgt.objects:
        if obj.object_id in by_member:
            out[obj.object_id] = fits[by_member[obj.object_id]]
            continue
        best_ci = min(
            range(len(member_positions)),
            key=lambda i: (
                float(np.linalg.norm(member_positions[i][1] - obj.centroid)),
                member_positions[i][0],
            ),
        )
        out[obj.object_id] = fits[member_positions[best_ci][0]]
    return out


def cluster_dump(clusters: list[MatchCluster], fits: list[AffineMap]) -> list[dict]:
    return [
        {
            "cluster_id": c.cluster_id,
            "members": [
                {"target_id": p.target_id, "reference_id": p.reference_id}
                for p in c.members
            ],
            "affine": {"A": f.A.tolist(), "b": f.b.tolist()},
            "kind": f.kind,
        }
        for c, f in zip(clusters, fits)
    ]
