"""Nearest-point accuracy metric for mapped scenes.

For each mapped target point we measure the distance to its nearest
reference point; accuracy at a threshold is the fraction of points strictly
below it.  Reported at several thresholds as both JSON and an aligned text
table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .parallel import worker_count
from .scene_model import SceneBundle
from .tps_map import SceneMap

DEFAULT_THRESHOLDS = (0.15, 0.20, 0.25)


@dataclass(frozen=True)
class EvalReport:
    thresholds: tuple[float, ...]
    accuracies: tuple[float, ...]
    nearest_distances: np.ndarray
    point_count: int


def chamfer_accuracy(
    mapped_points: np.ndarray,
    reference_cloud: np.ndarray,
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS,
) -> EvalReport:
    mapped_points = np.atleast_2d(np.asarray(mapped_points, dtype=np.float64))
    reference_cloud = np.atleast_2d(np.asarray(reference_cloud, dtype=np.float64))
    if mapped_points.size == 0 or reference_cloud.size == 0:
        raise ValueError("point sets must be non-empty")
    if any(t <= 0 for t in thresholds):
        raise ValueError("thresholds must be positive")
    dists, _ = cKDTree(reference_cloud).query(
        mapped_points, k=1, workers=worker_count()
    )
    dists = np.asarray(dists, dtype=np.float64).ravel()
    accuracies = tuple(float(np.mean(dists < t)) for t in thresholds)
    return EvalReport(
        thresholds=tuple(float(t) for t in thresholds),
        accuracies=accuracies,
        nearest_distances=dists,
        point_count=int(dists.size),
    )


def evaluate_map(
    scene_map: SceneMap,
    scene_tgt: SceneBundle,
    scene_ref: SceneBundle,
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS,
) -> EvalReport:
    """Map every target point sample through the spline and score it against
    the union of reference point samples."""
    mapped = scene_map.spline.apply_many(scene_tgt.all_points())
    return chamfer_accuracy(mapped, scene_ref.all_points(), thresholds)


def report_to_dict(report: EvalReport) -> dict:
    return {
        "thresholds": list(report.thresholds),
        "accuracies": list(report.accuracies),
        "point_count": report.point_count,
        "mean_nearest_distance": float(report.nearest_distances.mean()),
    }


def report_table(report: EvalReport) -> str:
    """Aligned two-row text table: thresholds over accuracies."""
    headers = [f"{t:.2f}" for t in report.thresholds]
    values = [f"{a:.2f}" for a in report.accuracies]
    width = max(len(h) for h in headers + values)
    head = "  ".join(h.rjust(width) for h in headers)
    vals = "  ".join(v.rjust(width) for v in values)
    return f"Threshold  {head}\nAccuracy   {vals}"
