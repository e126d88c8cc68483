"""Feature backends.

A backend answers two questions: "what does this object look like from this
view" (one embedding per rendered view) and "what does the surface feel like
at these points" (one feature row per point).  The offline backend ships with
the package and is fully deterministic: embeddings and features are drawn
from generators seeded by the mesh content hash and the configured model
ids, so equal geometry gives equal vectors with no model weights or GPU
involved.  A real model integration implements the same two methods.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .mesh import TriMesh


class ExtractionError(Exception):
    """Per-object extraction failure; callers skip the object with a warning."""


def _seeded_rng(*parts: bytes) -> np.random.Generator:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return np.random.default_rng(int.from_bytes(h.digest()[:8], "little"))


class OfflineBackend:
    """Deterministic geometry-hash features; no rendering, no inference."""

    def view_embedding(
        self, mesh: TriMesh, azimuth: float, elevation: float, cfg
    ) -> np.ndarray:
        """Unit embedding for one view; equal (mesh, pose) gives equal output."""
        if len(mesh.faces) == 0 or mesh.surface_area() <= 0:
            raise ExtractionError("mesh has no renderable surface")
        rng = _seeded_rng(
            cfg.vl_model_id.encode(),
            mesh.signature(),
            np.float64(round(azimuth, 9)).tobytes(),
            np.float64(round(elevation, 9)).tobytes(),
            int(cfg.image_size).to_bytes(4, "little"),
        )
        v = rng.standard_normal(cfg.embedding_dim)
        return v / np.linalg.norm(v)

    def point_features(self, mesh: TriMesh, points: np.ndarray, cfg) -> np.ndarray:
        """Random-Fourier features of a local shape descriptor.

        The descriptor mixes signed and unsigned local coordinates, so points
        that mirror each other across a symmetry plane of the mesh get nearby
        descriptors (they differ only in the flipped signed coordinate) and
        therefore similar features; unrelated points differ everywhere.
        """
        if len(mesh.faces) == 0 or mesh.surface_area() <= 0:
            raise ExtractionError("mesh has no surface to featurize")
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        local = points - mesh.surface_centroid()
        diag = float(np.linalg.norm(mesh.vertices.max(0) - mesh.vertices.min(0)))
        d = np.column_stack(
            [local, np.abs(local), np.linalg.norm(local, axis=1)]
        ) / max(diag, 1e-12)
        rng = _seeded_rng(cfg.shape_model_id.encode(), mesh.signature())
        w = rng.standard_normal((d.shape[1], cfg.feature_dim)) * 2.0
        b = rng.uniform(0.0, 2.0 * np.pi, cfg.feature_dim)
        return np.sqrt(2.0 / cfg.feature_dim) * np.cos(d @ w + b)
