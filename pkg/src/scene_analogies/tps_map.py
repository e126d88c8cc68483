"""Thin-plate-spline fitting and the end-to-end scene map.

The final map is a 3D TPS with kernel phi(r) = r (the biharmonic fundamental
solution in 3D): an affine part plus radial terms anchored at control
points.  `build_scene_map` runs the whole coarse-to-fine pipeline -- graph
build, matching, match clustering, per-cluster affine fits, per-point
displacement refinement -- and fits the spline to the resulting
point/target pairs, with documented fallbacks when a stage degenerates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .coarse_align import cluster_matches, fit_affine, assign_object_maps
from .config import PipelineConfig
from .feature_field import build_field
from .fine_align import optimize_displacements
from .graph_builder import build_graph
from .graph_matcher import MatchPair, match_graphs

DUPLICATE_MERGE_TOL = 1e-9
SOURCE_SPREAD_TOL = 1e-8


class DegenerateControlPointsError(RuntimeError):
    """Control points cannot anchor a TPS; fall back to an affine-only map."""


class TpsSolveError(RuntimeError):
    """The TPS linear system is numerically singular."""


@dataclass(frozen=True)
class ThinPlateSpline:
    control_points: np.ndarray  # (M, 3)
    kernel_weights: np.ndarray  # (M, 3)
    affine_A: np.ndarray  # (3, 3)
    affine_b: np.ndarray  # (3,)
    regularization: float

    def apply(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (3,) or not np.isfinite(q).all():
            raise ValueError("query point must be a finite 3-vector")
        return self.apply_many(q[None, :])[0]

    def apply_many(self, q: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(np.asarray(q, dtype=np.float64))
        if not np.isfinite(q).all():
            raise ValueError("query points must be finite")
        out = q @ self.affine_A.T + self.affine_b
        if self.control_points.shape[0]:
            out = out + cdist(q, self.control_points) @ self.kernel_weights
        return out


def identity_spline() -> ThinPlateSpline:
    return ThinPlateSpline(
        control_points=np.zeros((0, 3)),
        kernel_weights=np.zeros((0, 3)),
        affine_A=np.eye(3),
        affine_b=np.zeros(3),
        regularization=0.0,
    )


def affine_spline(A: np.ndarray, b: np.ndarray) -> ThinPlateSpline:
    return ThinPlateSpline(
        control_points=np.zeros((0, 3)),
        kernel_weights=np.zeros((0, 3)),
        affine_A=np.asarray(A, dtype=np.float64),
        affine_b=np.asarray(b, dtype=np.float64),
        regularization=0.0,
    )


def fit_tps(pairs, lam: float = 0.0) -> ThinPlateSpline:
    """Fit a 3D TPS to (source, target) point pairs.

    Duplicate sources (within 1e-9) are merged by averaging their targets.
    Requires at least 4 merged pairs whose sources span 3D; otherwise raises
    DegenerateControlPointsError so the caller can fall back to an
    affine-only map.  lam >= 0 adds a diagonal ridge on the kernel block
    (lam = 0 interpolates exactly).
    """
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[1:] != (2, 3):
        raise ValueError("pairs must be a sequence of (source, target) 3-vectors")
    src, dst = _merge_duplicate_sources(arr[:, 0, :], arr[:, 1, :])
    m = src.shape[0]
    if m < 4:
        raise DegenerateControlPointsError(
            f"only {m} distinct control points after merging; need >= 4"
        )
    centered = (src - src.mean(axis=0)).T
    if float(np.linalg.svd(centered, compute_uv=False)[-1]) <= SOURCE_SPREAD_TOL:
        raise DegenerateControlPointsError(
            "control points are coplanar; fit an affine map instead"
        )

    kernel = cdist(src, src)
    poly = np.hstack([np.ones((m, 1)), src])  # (M, 4)
    lhs = np.zeros((m + 4, m + 4))
    lhs[:m, :m] = kernel + lam * np.eye(m)
    lhs[:m, m:] = poly
    lhs[m:, :m] = poly.T
    rhs = np.zeros((m + 4, 3))
    rhs[:m] = dst
    try:
        sol = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise TpsSolveError(f"TPS system is singular: {exc}") from exc
    weights = sol[:m]
    coef = sol[m:]
    return ThinPlateSpline(
        control_points=src,
        kernel_weights=weights,
        affine_A=coef[1:].T,
        affine_b=coef[0],
        regularization=float(lam),
    )


def _merge_duplicate_sources(
    src: np.ndarray, dst: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    groups = _close_point_groups(src, DUPLICATE_MERGE_TOL)
    if len(groups) == src.shape[0]:
        return src, dst
    merged_src = np.array([src[g].mean(axis=0) for g in groups])
    merged_dst = np.array([dst[g].mean(axis=0) for g in groups])
    return merged_src, merged_dst


def _close_point_groups(points: np.ndarray, tol: float) -> list[np.ndarray]:
    """Connected groups of points within `tol`, ordered by first member index."""
    n = points.shape[0]
    pairs = cKDTree(points).query_pairs(r=tol, output_type="ndarray")
    parent = np.arange(n)

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(n)])
    order = []
    seen: dict[int, int] = {}
    for i, r in enumerate(roots):
        if r not in seen:
            seen[r] = len(order)
            order.append([])
        order[seen[r]].append(i)
    return [np.asarray(g) for g in order]


@dataclass(frozen=True)
class MapProvenance:
    matches: tuple[MatchPair, ...]
    clusters: list[dict]
    affine_kinds: dict[str, str]
    displacement_stats: dict
    diagnostics: list[str]


@dataclass(frozen=True)
class SceneMap:
    spline: ThinPlateSpline
    provenance: MapProvenance
    config: PipelineConfig


def build_scene_map(
    scene_tgt, scene_ref, cfg: PipelineConfig | None = None
) -> SceneMap:
    """Run the full coarse-to-fine pipeline between two validated scenes.

    Fallbacks: an empty match set yields an identity map (with a
    diagnostic); degenerate TPS control points yield the affine map of the
    largest cluster.
    """
    if cfg is None:
        cfg = PipelineConfig()
    cfg.validate()
    diagnostics: list[str] = []

    g_tgt = build_graph(scene_tgt, cfg.edge_threshold)
    g_ref = build_graph(scene_ref, cfg.edge_threshold)
    matches = match_graphs(g_tgt, g_ref, cfg.affinity)
    if len(matches) == 0:
        diagnostics.append("empty match set; falling back to the identity map")
        provenance = MapProvenance(
            matches=(),
            clusters=[],
            affine_kinds={o.object_id: "identity" for o in scene_tgt.objects},
            displacement_stats={},
            diagnostics=diagnostics,
        )
        return SceneMap(spline=identity_spline(), provenance=provenance, config=cfg)

    clusters = cluster_matches(
        matches, g_tgt, g_ref, eps=cfg.cluster_eps, min_pts=cfg.cluster_min_pts
    )
    fits = [fit_affine(c, g_tgt, g_ref) for c in clusters]
    object_maps = assign_object_maps(scene_tgt, clusters, fits, g_tgt, g_ref)

    field_tgt = build_field(scene_tgt, cfg.field)
    field_ref = build_field(scene_ref, cfg.field)
    solution = optimize_displacements(
        scene_tgt, field_tgt, field_ref, object_maps, cfg.optim
    )

    deltas = solution.deltas()
    cost_before = float(sum(e.cost_before for e in solution.entries))
    cost_after = float(sum(e.cost_after for e in solution.entries))
    stats = {
        "point_count": len(solution.entries),
        "mean_abs_delta": float(np.linalg.norm(deltas, axis=1).mean())
        if len(solution.entries)
        else 0.0,
        "max_abs_delta": float(np.abs(deltas).max()) if len(solution.entries) else 0.0,
        "cost_before": cost_before,
        "cost_after": cost_after,
    }

    sources = solution.points()
    targets = solution.refined_targets()
    sources, targets = _subsample_control_points(
        sources, targets, cfg.tps_max_control_points
    )
    try:
        spline = fit_tps(np.stack([sources, targets], axis=1), cfg.tps_lambda)
    except DegenerateControlPointsError as exc:
        dominant = max(
            range(len(clusters)), key=lambda i: (len(clusters[i].members), -i)
        )
        diagnostics.append(
            f"TPS degenerate ({exc}); using the affine map of the largest cluster"
        )
        spline = affine_spline(fits[dominant].A, fits[dominant].b)

    provenance = MapProvenance(
        matches=matches.pairs,
        clusters=[
            {
                "cluster_id": c.cluster_id,
                "members": [
                    {"target_id": p.target_id, "reference_id": p.reference_id}
                    for p in c.members
                ],
                "kind": f.kind,
            }
            for c, f in zip(clusters, fits)
        ],
        affine_kinds={oid: amap.kind for oid, amap in object_maps.items()},
        displacement_stats=stats,
        diagnostics=diagnostics,
    )
    return SceneMap(spline=spline, provenance=provenance, config=cfg)


def _subsample_control_points(
    sources: np.ndarray, targets: np.ndarray, cap: int
) -> tuple[np.ndarray, np.ndarray]:
    n = sources.shape[0]
    if n <= cap:
        return sources, targets
    keep = np.unique(np.round(np.linspace(0, n - 1, cap)).astype(np.int64))
    return sources[keep], targets[keep]


# ---------------------------------------------------------------------------
# Map artifact I/O.  JSON with full-precision floats: a reloaded map applies
# bit-identically.
# ---------------------------------------------------------------------------


def scene_map_to_dict(scene_map: SceneMap) -> dict:
    s = scene_map.spline
    return {
        "format": "scene-map",
        "version": 1,
        "spline": {
            "control_points": s.control_points.tolist(),
            "kernel_weights": s.kernel_weights.tolist(),
            "affine_A": s.affine_A.tolist(),
            "affine_b": s.affine_b.tolist(),
            "regularization": s.regularization,
        },
        "provenance": {
            "matches": [
                {
                    "target_id": p.target_id,
                    "reference_id": p.reference_id,
                    "score": p.score,
                }
                for p in scene_map.provenance.matches
            ],
            "clusters": scene_map.provenance.clusters,
            "affine_kinds": scene_map.provenance.affine_kinds,
            "displacement_stats": scene_map.provenance.displacement_stats,
            "diagnostics": scene_map.provenance.diagnostics,
        },
        "config": scene_map.config.to_dict(),
    }


def save_scene_map(scene_map: SceneMap, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(scene_map_to_dict(scene_map), sort_keys=True) + "\n"
    )


def load_scene_map(path: str | Path) -> SceneMap:
    from .config import config_from_dict

    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "scene-map":
        raise ValueError(f"{path}: not a scene-map artifact")
    s = doc["spline"]
    spline = ThinPlateSpline(
        control_points=np.asarray(s["control_points"], dtype=np.float64).reshape(
            -1, 3
        ),
        kernel_weights=np.asarray(s["kernel_weights"], dtype=np.float64).reshape(
            -1, 3
        ),
        affine_A=np.asarray(s["affine_A"], dtype=np.float64),
        affine_b=np.asarray(s["affine_b"], dtype=np.float64),
        regularization=float(s["regularization"]),
    )
    prov_doc = doc["provenance"]
    provenance = MapProvenance(
        matches=tuple(
            MatchPair(p["target_id"], p["reference_id"], p["score"])
            for p in prov_doc["matches"]
        ),
        clusters=prov_doc["clusters"],
        affine_kinds=prov_doc["affine_kinds"],
        displacement_stats=prov_doc["displacement_stats"],
        diagnostics=prov_doc["diagnostics"],
    )
    return SceneMap(
        spline=spline,
        provenance=provenance,
        config=config_from_dict(doc["config"]),
    )
