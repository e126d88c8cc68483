"""Minimal triangle-mesh representation: OBJ loading, area-uniform surface
sampling, and a content hash used to seed deterministic feature backends."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MeshError(Exception):
    pass


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray  # V x 3 float64
    faces: np.ndarray  # F x 3 int64, indices into vertices

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError("vertices must be V x 3")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError("faces must be F x 3")
        if not np.isfinite(v).all():
            raise MeshError("non-finite vertex coordinate")
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    def triangle_areas(self) -> np.ndarray:
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def surface_area(self) -> float:
        return float(self.triangle_areas().sum())

    def surface_centroid(self) -> np.ndarray:
        """Area-weighted mean of triangle centroids."""
        areas = self.triangle_areas()
        if areas.sum() <= 0:
            raise MeshError("mesh has no surface area")
        centers = self.vertices[self.faces].mean(axis=1)
        return (centers * areas[:, None]).sum(axis=0) / areas.sum()

    def signature(self) -> bytes:
        """Content hash, stable across runs and file paths."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(np.round(self.vertices, 9)).tobytes())
        h.update(np.ascontiguousarray(self.faces).tobytes())
        return h.digest()


def load_obj(path: str | Path) -> TriMesh:
    """Parse the v/f subset of Wavefront OBJ; polygons are fan-triangulated.

    Vertex entries of the form i, i/t, i/t/n, i//n are accepted; texture and
    normal indices are ignored.  Indices are 1-based, negative counts from
    the end, per the format.
    """
    path = Path(path)
    if not path.is_file():
        raise MeshError(f"mesh file not found: {path}")
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise MeshError(f"{path}:{lineno}: vertex needs 3 coordinates")
            vertices.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            if len(parts) < 4:
                raise MeshError(f"{path}:{lineno}: face needs >= 3 vertices")
            idx = []
            for token in parts[1:]:
                i = int(token.split("/")[0])
                idx.append(i - 1 if i > 0 else len(vertices) + i)
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
        # vt / vn / o / g / s / usemtl / mtllib carry no geometry
    if not vertices:
        raise MeshError(f"{path}: no vertices")
    return TriMesh(np.asarray(vertices), np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def sample_surface(mesh: TriMesh, spacing: float, seed: int) -> np.ndarray:
    """Area-uniform surface samples, one per `spacing`^2 of area.

    Deterministic for a fixed (mesh, spacing, seed): the generator is seeded
    from the mesh content hash so sample sets do not depend on file paths or
    call order.
    """
    if spacing <= 0:
        raise MeshError("spacing must be positive")
    areas = mesh.triangle_areas()
    total = float(areas.sum())
    if total <= 0 or len(mesh.faces) == 0:
        raise MeshError("mesh has no surface area")
    n = max(1, int(round(total / spacing**2)))
    mix = hashlib.sha256(mesh.signature() + seed.to_bytes(8, "little", signed=True))
    rng = np.random.default_rng(int.from_bytes(mix.digest()[:8], "little"))
    tri = rng.choice(len(areas), size=n, p=areas / total)
    u = rng.random((n, 1))
    v = rng.random((n, 1))
    flip = (u + v) > 1.0
    u = np.where(flip, 1.0 - u, u)
    v = np.where(flip, 1.0 - v, v)
    a = mesh.vertices[mesh.faces[tri, 0]]
    b = mesh.vertices[mesh.faces[tri, 1]]
    c = mesh.vertices[mesh.faces[tri, 2]]
    return a + u * (b - a) + v * (c - a)
