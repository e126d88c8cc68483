"""Scene data types, the scene-bundle file format, validation, and resampling.

A scene is exchanged as a set of object instances, each carrying surface
point samples, one per-point feature row per sample, and a single embedding
vector.  Bundles are immutable after load and safe to share across pipeline
stages.  All lengths are meters.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CENTROID_TOL = 1e-6

_BINARY_MAGIC = b"SBND"
_BINARY_VERSION = 1


class SceneFormatError(ValueError):
    """Raised when a scene-bundle file cannot be parsed into the schema."""


class SceneValidationError(ValueError):
    """Raised when a parsed bundle violates a type invariant."""

    def __init__(self, diagnostics: list["Diagnostic"]):
        self.diagnostics = diagnostics
        lines = "; ".join(str(d) for d in diagnostics)
        super().__init__(f"scene bundle failed validation: {lines}")


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" or "warning"
    object_id: str | None
    message: str

    def __str__(self) -> str:
        where = f" [{self.object_id}]" if self.object_id else ""
        return f"{self.severity}{where}: {self.message}"


@dataclass(frozen=True)
class PointSample:
    """One surface sample: a position, its feature row, and the owning object."""

    position: np.ndarray  # (3,)
    feature: np.ndarray  # (D,)
    owner: str


@dataclass(frozen=True)
class ObjectInstance:
    object_id: str
    label: str | None
    centroid: np.ndarray  # (3,)
    points: np.ndarray  # (N, 3)
    point_features: np.ndarray  # (N, D)
    embedding: np.ndarray  # (E,)


@dataclass(frozen=True)
class SceneBundle:
    scene_id: str
    feature_dim: int
    embedding_dim: int
    objects: tuple[ObjectInstance, ...]

    def all_points(self) -> np.ndarray:
        return np.concatenate([o.points for o in self.objects], axis=0)

    def all_features(self) -> np.ndarray:
        return np.concatenate([o.point_features for o in self.objects], axis=0)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        pts = self.all_points()
        return pts.min(axis=0), pts.max(axis=0)

    def object_by_id(self, object_id: str) -> ObjectInstance:
        for obj in self.objects:
            if obj.object_id == object_id:
                return obj
        raise KeyError(object_id)


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    out.setflags(write=False)
    return out


def make_object(
    object_id: str,
    points: np.ndarray,
    point_features: np.ndarray,
    embedding: np.ndarray,
    label: str | None = None,
    centroid: np.ndarray | None = None,
) -> ObjectInstance:
    """Normalize arrays and fill the centroid from the point mean if absent."""
    points = _frozen(np.atleast_2d(points))
    point_features = _frozen(np.atleast_2d(point_features))
    embedding = _frozen(np.ravel(embedding))
    if centroid is None:
        centroid = points.mean(axis=0)
    return ObjectInstance(
        object_id=object_id,
        label=label,
        centroid=_frozen(np.ravel(centroid)),
        points=points,
        point_features=point_features,
        embedding=embedding,
    )


def make_bundle(
    scene_id: str,
    feature_dim: int,
    embedding_dim: int,
    objects: list[ObjectInstance] | tuple[ObjectInstance, ...],
) -> SceneBundle:
    return SceneBundle(
        scene_id=scene_id,
        feature_dim=int(feature_dim),
        embedding_dim=int(embedding_dim),
        objects=tuple(objects),
    )


def validate_scene(scene: SceneBundle) -> list[Diagnostic]:
    """Check every type invariant; one diagnostic per violation, [] if clean."""
    out: list[Diagnostic] = []
    if scene.feature_dim < 1:
        out.append(Diagnostic("error", None, "feature_dim must be positive"))
    if scene.embedding_dim < 1:
        out.append(Diagnostic("error", None, "embedding_dim must be positive"))
    if len(scene.objects) == 0:
        out.append(Diagnostic("error", None, "scene has no objects"))

    for obj in scene.objects:
        oid = obj.object_id
        if obj.points.ndim != 2 or obj.points.shape[1] != 3:
            out.append(Diagnostic("error", oid, "points must be an Nx3 array"))
            continue
        n = obj.points.shape[0]
        if n < 1:
            out.append(Diagnostic("error", oid, "object has no points"))
            continue
        bad = ~np.isfinite(obj.points)
        if bad.any():
            idx = int(np.argwhere(bad.any(axis=1))[0][0])
            out.append(
                Diagnostic("error", oid, f"non-finite coordinate at point index {idx}")
            )
        if obj.point_features.ndim != 2 or obj.point_features.shape[0] != n:
            out.append(
                Diagnostic(
                    "error",
                    oid,
                    f"point_features has {obj.point_features.shape[0]} rows "
                    f"for {n} points",
                )
            )
        elif obj.point_features.shape[1] != scene.feature_dim:
            out.append(
                Diagnostic(
                    "error",
                    oid,
                    f"feature rows have length {obj.point_features.shape[1]}, "
                    f"expected {scene.feature_dim}",
                )
            )
        elif not np.isfinite(obj.point_features).all():
            out.append(Diagnostic("warning", oid, "non-finite feature values"))
        if obj.embedding.shape != (scene.embedding_dim,):
            out.append(
                Diagnostic(
                    "error",
                    oid,
                    f"embedding has length {obj.embedding.shape[0]}, "
                    f"expected {scene.embedding_dim}",
                )
            )
        elif not np.isfinite(obj.embedding).all():
            out.append(Diagnostic("error", oid, "embedding has non-finite entries"))
        elif float(np.linalg.norm(obj.embedding)) == 0.0:
            out.append(Diagnostic("warning", oid, "embedding has zero norm"))
        if obj.centroid.shape != (3,):
            out.append(Diagnostic("error", oid, "centroid must be a 3-vector"))
        elif np.isfinite(obj.points).all() and obj.points.shape[0] >= 1:
            mean = obj.points.mean(axis=0)
            if np.abs(obj.centroid - mean).max() > CENTROID_TOL:
                out.append(
                    Diagnostic(
                        "error",
                        oid,
                        "centroid deviates from the point mean by more than "
                        f"{CENTROID_TOL}",
                    )
                )
    return out


def resample_object_surface(obj: ObjectInstance, spacing: float) -> list[PointSample]:
    """Voxel-grid downsample the object's stored points at cell size `spacing`.

    One representative per occupied cell: the stored point nearest the cell
    center (ties broken by lowest point index).  Deterministic, and idempotent
    at a fixed spacing.  Retained samples keep their stored feature rows.
    """
    if spacing <= 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    keep = voxel_downsample_indices(obj.points, spacing)
    return [
        PointSample(
            position=obj.points[i],
            feature=obj.point_features[i],
            owner=obj.object_id,
        )
        for i in keep
    ]


def voxel_downsample_indices(points: np.ndarray, spacing: float) -> np.ndarray:
    """Indices of one point per occupied voxel cell, nearest the cell center.

    Output is ordered by cell index (lexicographic), which is stable under
    re-application: every survivor occupies its own cell.
    """
    points = np.asarray(points, dtype=np.float64)
    cells = np.floor(points / spacing).astype(np.int64)
    centers = (cells + 0.5) * spacing
    d2 = np.einsum("ij,ij->i", points - centers, points - centers)

    order = np.lexsort((np.arange(len(points)), d2, cells[:, 2], cells[:, 1], cells[:, 0]))
    sorted_cells = cells[order]
    first = np.ones(len(points), dtype=bool)
    if len(points) > 1:
        first[1:] = (sorted_cells[1:] != sorted_cells[:-1]).any(axis=1)
    return order[first]


# ---------------------------------------------------------------------------
# Bundle file I/O.  JSON is the normative format; the binary variant stores
# the same schema with length-prefixed little-endian float32 arrays.
# ---------------------------------------------------------------------------


def load_scene(path: str | Path) -> SceneBundle:
    """Load and validate a scene bundle (JSON, or the binary sidecar format).

    Raises SceneFormatError on parse/shape failures and SceneValidationError
    (with the full diagnostic list) when an invariant is violated.  Warnings
    do not block loading.
    """
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == _BINARY_MAGIC:
        bundle = _bundle_from_binary(raw, str(path))
    else:
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise SceneFormatError(f"{path}: not valid JSON: {exc}") from exc
        bundle = _bundle_from_dict(doc, str(path))
    diags = validate_scene(bundle)
    errors = [d for d in diags if d.severity == "error"]
    if errors:
        raise SceneValidationError(errors)
    return bundle


def save_scene(bundle: SceneBundle, path: str | Path, binary: bool = False) -> None:
    path = Path(path)
    if binary:
        path.write_bytes(_bundle_to_binary(bundle))
    else:
        path.write_text(json.dumps(bundle_to_dict(bundle), sort_keys=True) + "\n")


def bundle_to_dict(bundle: SceneBundle) -> dict:
    return {
        "scene_id": bundle.scene_id,
        "feature_dim": bundle.feature_dim,
        "embedding_dim": bundle.embedding_dim,
        "objects": [
            {
                "id": o.object_id,
                "label": o.label,
                "centroid": o.centroid.tolist(),
                "points": o.points.tolist(),
                "point_features": o.point_features.tolist(),
                "embedding": o.embedding.tolist(),
            }
            for o in bundle.objects
        ],
    }


def _need(doc: dict, key: str, kind, where: str):
    if key not in doc:
        raise SceneFormatError(f"{where}: missing key '{key}'")
    val = doc[key]
    if kind is not None and not isinstance(val, kind):
        raise SceneFormatError(
            f"{where}: key '{key}' has type {type(val).__name__}"
        )
    return val


def _bundle_from_dict(doc, where: str) -> SceneBundle:
    if not isinstance(doc, dict):
        raise SceneFormatError(f"{where}: top level must be a JSON object")
    scene_id = _need(doc, "scene_id", str, where)
    feature_dim = _need(doc, "feature_dim", int, where)
    embedding_dim = _need(doc, "embedding_dim", int, where)
    objects_raw = _need(doc, "objects", list, where)
    objects = []
    for i, entry in enumerate(objects_raw):
        ctx = f"{where}: objects[{i}]"
        if not isinstance(entry, dict):
            raise SceneFormatError(f"{ctx}: must be an object")
        oid = _need(entry, "id", str, ctx)
        label = entry.get("label")
        if label is not None and not isinstance(label, str):
            raise SceneFormatError(f"{ctx}: label must be a string or null")
        try:
            points = np.asarray(_need(entry, "points", list, ctx), dtype=np.float64)
            feats = np.asarray(
                _need(entry, "point_features", list, ctx), dtype=np.float64
            )
            emb = np.asarray(_need(entry, "embedding", list, ctx), dtype=np.float64)
            centroid = entry.get("centroid")
            if centroid is not None:
                centroid = np.asarray(centroid, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise SceneFormatError(f"{ctx}: ragged or non-numeric array: {exc}") from exc
        if points.ndim != 2 or points.shape[1] != 3:
            raise SceneFormatError(f"{ctx}: points must be an Nx3 array")
        objects.append(
            make_object(oid, points, feats, emb, label=label, centroid=centroid)
        )
    return make_bundle(scene_id, feature_dim, embedding_dim, objects)


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _pack_f32(a: np.ndarray) -> bytes:
    flat = np.ascontiguousarray(a, dtype="<f4").ravel()
    return struct.pack("<Q", flat.size) + flat.tobytes()


class _Reader:
    def __init__(self, raw: bytes, where: str):
        self.raw = raw
        self.pos = 0
        self.where = where

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise SceneFormatError(f"{self.where}: truncated binary bundle")
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return self.take(1)[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    def f32_array(self) -> np.ndarray:
        count = struct.unpack("<Q", self.take(8))[0]
        return np.frombuffer(self.take(4 * count), dtype="<f4").astype(np.float64)


def _bundle_to_binary(bundle: SceneBundle) -> bytes:
    parts = [_BINARY_MAGIC, struct.pack("<I", _BINARY_VERSION)]
    parts.append(_pack_str(bundle.scene_id))
    parts.append(struct.pack("<II", bundle.feature_dim, bundle.embedding_dim))
    parts.append(struct.pack("<I", len(bundle.objects)))
    for o in bundle.objects:
        parts.append(_pack_str(o.object_id))
        if o.label is None:
            parts.append(b"\x00")
        else:
            parts.append(b"\x01" + _pack_str(o.label))
        parts.append(_pack_f32(o.centroid))
        parts.append(_pack_f32(o.points))
        parts.append(_pack_f32(o.point_features))
        parts.append(_pack_f32(o.embedding))
    return b"".join(parts)


def _bundle_from_binary(raw: bytes, where: str) -> SceneBundle:
    r = _Reader(raw, where)
    if r.take(4) != _BINARY_MAGIC:
        raise SceneFormatError(f"{where}: bad magic")
    version = r.u32()
    if version != _BINARY_VERSION:
        raise SceneFormatError(f"{where}: unsupported binary version {version}")
    scene_id = r.string()
    feature_dim = r.u32()
    embedding_dim = r.u32()
    n_objects = r.u32()
    objects = []
    for _ in range(n_objects):
        oid = r.string()
        label = r.string() if r.u8() else None
        centroid = r.f32_array()
        points = r.f32_array().reshape(-1, 3)
        n = points.shape[0]
        feats = r.f32_array().reshape(n, -1) if n else r.f32_array()
        emb = r.f32_array()
        # float32 storage drifts the stored centroid off the float64 point
        # mean; recompute so the centroid invariant holds after load.
        objects.append(make_object(oid, points, feats, emb, label=label, centroid=None))
        del centroid
    return make_bundle(scene_id, feature_dim, embedding_dim, objects)
