"""Per-point local displacements minimizing the feature-field alignment cost.

For every resampled object point p, the optimizer finds the displacement
delta (bounded in the max norm by a search radius) that minimizes
||phi_tgt(p) - phi_ref(A p + b + delta)||_2, the summand of the fine
alignment cost.  Each point is solved independently: first an exhaustive
axis-aligned grid search, then a derivative-free coordinate descent with a
halving step schedule.  Derivative-free search is deliberate: the
truncated-kNN field is only piecewise smooth, so finite-difference slopes
are used purely for step directions and every step must strictly lower the
cost to be kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coarse_align import AffineMap
from .feature_field import FeatureField
from .scene_model import SceneBundle, resample_object_surface


@dataclass(frozen=True)
class OptimConfig:
    sample_spacing: float = 0.05
    search_radius: float = 0.3
    grid_step: float = 0.05
    descent_iters: int = 20
    descent_step0: float = 0.02
    fd_epsilon: float = 1e-3

    def validate(self) -> None:
        for name in (
            "sample_spacing",
            "search_radius",
            "grid_step",
            "descent_step0",
            "fd_epsilon",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.descent_iters < 0:
            raise ValueError("descent_iters must be >= 0")
        if self.grid_step > self.search_radius:
            raise ValueError("grid_step must not exceed search_radius")


@dataclass(frozen=True)
class DisplacementEntry:
    point: np.ndarray  # p, on the target object surface
    object_id: str
    coarse_target: np.ndarray  # A p + b
    delta: np.ndarray  # optimal local displacement
    cost_before: float  # summand at delta = 0
    cost_after: float  # summand at the optimum


@dataclass(frozen=True)
class DisplacementSolution:
    entries: tuple[DisplacementEntry, ...]
    field_tgt: FeatureField
    field_ref: FeatureField

    def points(self) -> np.ndarray:
        return np.array([e.point for e in self.entries]).reshape(-1, 3)

    def refined_targets(self) -> np.ndarray:
        return np.array(
            [e.coarse_target + e.delta for e in self.entries]
        ).reshape(-1, 3)

    def deltas(self) -> np.ndarray:
        return np.array([e.delta for e in self.entries]).reshape(-1, 3)


def fine_cost(solution: DisplacementSolution) -> float:
    """Sum of per-entry feature residuals at the stored displacements."""
    if not solution.entries:
        return 0.0
    p = solution.points()
    q = solution.refined_targets()
    diff = solution.field_tgt.query_many(p) - solution.field_ref.query_many(q)
    return float(np.linalg.norm(diff, axis=1).sum())


def grid_offsets(search_radius: float, grid_step: float) -> np.ndarray:
    """Axis-aligned search grid in lexicographic (dx, dy, dz) order; always
    contains the zero offset."""
    m = int(np.floor(search_radius / grid_step + 1e-12))
    axis = np.clip(
        grid_step * np.arange(-m, m + 1, dtype=np.float64),
        -search_radius,
        search_radius,
    )
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])


def optimize_displacements(
    scene_tgt: SceneBundle,
    field_tgt: FeatureField,
    field_ref: FeatureField,
    object_maps: dict[str, AffineMap],
    cfg: OptimConfig | None = None,
) -> DisplacementSolution:
    """Independent per-point search: exhaustive grid, then coordinate descent.

    Grid ties resolve to the lexicographically smallest offset.  Descent
    probes central differences at +-fd_epsilon per axis, steps against the
    slope sign with a halving schedule, clamps to the search box, and keeps
    only strictly cost-decreasing moves, so cost_after <= cost_before holds
    entry-wise (the grid contains delta = 0).
    """
    if cfg is None:
        cfg = OptimConfig()
    cfg.validate()
    if field_tgt.feature_dim != field_ref.feature_dim:
        raise ValueError(
            f"feature dims differ: {field_tgt.feature_dim} vs {field_ref.feature_dim}"
        )
    for obj in scene_tgt.objects:
        if obj.object_id not in object_maps:
            raise ValueError(f"no coarse map for object '{obj.object_id}'")

    points: list[np.ndarray] = []
    owners: list[str] = []
    coarse: list[np.ndarray] = []
    for obj in scene_tgt.objects:
        amap = object_maps[obj.object_id]
        for sample in resample_object_surface(obj, cfg.sample_spacing):
            points.append(sample.position)
            owners.append(obj.object_id)
            coarse.append(amap.apply(sample.position))
    p = np.array(points).reshape(-1, 3)
    ct = np.array(coarse).reshape(-1, 3)
    n = p.shape[0]
    if n == 0:
        return DisplacementSolution((), field_tgt, field_ref)

    feat_tgt = field_tgt.query_many(p)  # (n, D), fixed across the search

    def costs_at(deltas: np.ndarray) -> np.ndarray:
        diff = field_ref.query_many(ct + deltas) - feat_tgt
        return np.linalg.norm(diff, axis=1)

    offsets = grid_offsets(cfg.search_radius, cfg.grid_step)
    zero_idx = int(np.flatnonzero((offsets == 0.0).all(axis=1))[0])
    g = offsets.shape[0]

    delta = np.empty((n, 3), dtype=np.float64)
    cur = np.empty(n, dtype=np.float64)
    cost_before = np.empty(n, dtype=np.float64)
    block = max(1, 200_000 // g)
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        cand = (ct[lo:hi, None, :] + offsets[None, :, :]).reshape(-1, 3)
        diff = field_ref.query_many(cand).reshape(hi - lo, g, -1) - feat_tgt[
            lo:hi, None, :
        ]
        grid_costs = np.linalg.norm(diff, axis=2)  # (rows, g)
        best = grid_costs.argmin(axis=1)  # first min = lexicographic smallest
        rows = np.arange(hi - lo)
        delta[lo:hi] = offsets[best]
        cur[lo:hi] = grid_costs[rows, best]
        cost_before[lo:hi] = grid_costs[:, zero_idx]

    r = cfg.search_radius
    for it in range(cfg.descent_iters):
        step = cfg.descent_step0 * 0.5 ** (it // 5)
        slopes = np.empty((n, 3), dtype=np.float64)
        for axis in range(3):
            probe = np.zeros(3)
            probe[axis] = cfg.fd_epsilon
            slopes[:, axis] = costs_at(delta + probe) - costs_at(delta - probe)
        proposal = np.clip(delta - step * np.sign(slopes), -r, r)
        prop_cost = costs_at(proposal)
        improved = prop_cost < cur
        delta[improved] = proposal[improved]
        cur[improved] = prop_cost[improved]

    entries = tuple(
        DisplacementEntry(
            point=p[i],
            object_id=owners[i],
            coarse_target=ct[i],
            delta=delta[i],
            cost_before=float(cost_before[i]),
            cost_after=float(cur[i]),
        )
        for i in range(n)
    )
    return DisplacementSolution(entries, field_tgt, field_ref)


def solution_dump(solution: DisplacementSolution) -> list[dict]:
    return [
        {
            "point": e.point.tolist(),
            "object_id": e.object_id,
            "coarse_target": e.coarse_target.tolist(),
            "delta": e.delta.tolist(),
            "cost_before": e.cost_before,
            "cost_after": e.cost_after,
        }
        for e in solution.entries
    ]
