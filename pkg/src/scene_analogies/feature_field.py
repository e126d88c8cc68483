"""Continuous feature field over R^3 by truncated-kNN inverse-distance weighting.

The field interpolates the stored per-point features of a scene: a query
gathers its k nearest samples and blends their features with weights
d^(-power).  Queries at (or within epsilon of) a stored sample snap to the
sample feature, which is the limit value of the weighting scheme; co-located
samples average.  Fields are immutable after construction and safe for
unbounded concurrent evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .parallel import worker_count
from .scene_model import SceneBundle

# Cap on elements gathered per query block, to bound transient memory.
_BLOCK_ELEMS = 8_000_000


@dataclass(frozen=True)
class FieldConfig:
    k: int = 100
    power: float = 2.0
    epsilon: float = 1e-9

    def validate(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.power <= 0:
            raise ValueError(f"power must be positive, got {self.power}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


class FeatureField:
    """kNN-IDW interpolator built once over a fixed sample set."""

    def __init__(self, positions: np.ndarray, features: np.ndarray, cfg: FieldConfig):
        cfg.validate()
        positions = np.ascontiguousarray(positions, dtype=np.float64)
        features = np.ascontiguousarray(features, dtype=np.float64)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise ValueError("positions must be an Nx3 array")
        if features.ndim != 2 or features.shape[0] != positions.shape[0]:
            raise ValueError("features must align with positions row-wise")
        if positions.shape[0] == 0:
            raise ValueError("cannot build a field over zero samples")
        positions.setflags(write=False)
        features.setflags(write=False)
        self.positions = positions
        self.features = features
        self.cfg = cfg
        self.k_eff = min(cfg.k, positions.shape[0])
        self._tree = cKDTree(positions)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def query(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (3,) or not np.isfinite(q).all():
            raise ValueError("query point must be a finite 3-vector")
        return self.query_many(q[None, :])[0]

    def query_many(self, q: np.ndarray) -> np.ndarray:
        """Evaluate the field at an (n, 3) batch of finite points."""
        q = np.ascontiguousarray(q, dtype=np.float64)
        if q.ndim != 2 or q.shape[1] != 3:
            raise ValueError("queries must be an nx3 array")
        if not np.isfinite(q).all():
            raise ValueError("queries must be finite")
        n = q.shape[0]
        out = np.empty((n, self.feature_dim), dtype=np.float64)
        block = max(1, _BLOCK_ELEMS // (self.k_eff * max(1, self.feature_dim)))
        for lo in range(0, n, block):
            hi = min(n, lo + block)
            out[lo:hi] = self._query_block(q[lo:hi])
        return out

    def _query_block(self, q: np.ndarray) -> np.ndarray:
        k = self.k_eff
        dist, idx = self._tree.query(q, k=k, workers=worker_count())
        if k == 1:
            dist = dist[:, None]
            idx = idx[:, None]
        feats = self.features[idx]  # (n, k, D)
        eps = self.cfg.epsilon
        out = np.empty((q.shape[0], self.feature_dim), dtype=np.float64)

        snap = dist[:, 0] < eps
        if snap.any():
            mask = dist[snap] < eps  # (m, k); first column all True
            w = mask.astype(np.float64)
            out[snap] = np.einsum("mk,mkd->md", w, feats[snap]) / w.sum(axis=1)[:, None]
        far = ~snap
        if far.any():
            w = dist[far] ** (-self.cfg.power)
            out[far] = np.einsum("mk,mkd->md", w, feats[far]) / w.sum(axis=1)[:, None]
        return out


def build_field(scene: SceneBundle, cfg: FieldConfig | None = None) -> FeatureField:
    """Field over the union of every object's point samples; k is clamped to
    the total sample count."""
    if cfg is None:
        cfg = FieldConfig()
    if len(scene.objects) == 0:
        raise ValueError("cannot build a field from an empty scene")
    return FeatureField(scene.all_points(), scene.all_features(), cfg)


def residual(
    field_tgt: FeatureField,
    field_ref: FeatureField,
    p: np.ndarray,
    p_ref: np.ndarray,
) -> float:
    """Euclidean norm of the feature difference between the two field values."""
    if field_tgt.feature_dim != field_ref.feature_dim:
        raise ValueError(
            f"feature dims differ: {field_tgt.feature_dim} vs {field_ref.feature_dim}"
        )
    return float(np.linalg.norm(field_tgt.query(p) - field_ref.query(p_ref)))


def residual_many(
    field_tgt: FeatureField,
    field_ref: FeatureField,
    p: np.ndarray,
    p_ref: np.ndarray,
) -> np.ndarray:
    """Row-wise residual for aligned (n, 3) batches."""
    if field_tgt.feature_dim != field_ref.feature_dim:
        raise ValueError(
            f"feature dims differ: {field_tgt.feature_dim} vs {field_ref.feature_dim}"
        )
    diff = field_tgt.query_many(p) - field_ref.query_many(p_ref)
    return np.linalg.norm(diff, axis=1)
