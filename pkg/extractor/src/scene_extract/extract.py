"""Scene-bundle extraction: meshes in, normative scene-bundle JSON out.

The bundle format is the contract with the mapping pipeline: one JSON
document with `scene_id`, `feature_dim`, `embedding_dim`, and `objects`,
each object carrying `id`, `label`, `centroid`, `points`, `point_features`
(row-aligned with points), and `embedding`.  Every bundle is schema-checked
here before it is written; a bundle that fails the downstream loader is a
bug in this package, not in the consumer.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backend import ExtractionError, OfflineBackend
from .mesh import MeshError, TriMesh, load_obj, sample_surface


class ManifestError(Exception):
    pass


class BundleFormatError(Exception):
    pass


@dataclass(frozen=True)
class ExtractionConfig:
    views: int = 8
    elevation_deg: float = 30.0
    image_size: int = 224
    vl_model_id: str = "offline-hash-v1"
    shape_model_id: str = "offline-fourier-v1"
    spacing: float = 0.05
    feature_dim: int = 16
    embedding_dim: int = 32
    seed: int = 0

    def validate(self) -> None:
        if self.views < 1:
            raise ValueError("views must be >= 1")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        if self.image_size < 1:
            raise ValueError("image_size must be >= 1")
        if self.feature_dim < 1 or self.embedding_dim < 1:
            raise ValueError("feature and embedding dims must be >= 1")


def view_ring(cfg: ExtractionConfig) -> list[tuple[float, float]]:
    """(azimuth, elevation) radians: evenly spaced ring at fixed elevation."""
    el = math.radians(cfg.elevation_deg)
    return [(2.0 * math.pi * i / cfg.views, el) for i in range(cfg.views)]


def extract_object_embedding(
    mesh: TriMesh, cfg: ExtractionConfig, backend=None, poses=None
) -> np.ndarray:
    """Mean of per-view embeddings over the ring, L2-normalized after the mean."""
    backend = backend or OfflineBackend()
    poses = view_ring(cfg) if poses is None else poses
    views = np.stack(
        [backend.view_embedding(mesh, az, el, cfg) for az, el in poses]
    )
    mean = views.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm < 1e-12:
        raise ExtractionError("view embeddings cancelled to zero")
    return mean / norm


def extract_point_features(
    mesh: TriMesh, cfg: ExtractionConfig, backend=None
) -> tuple[np.ndarray, np.ndarray]:
    """Area-uniform surface samples plus one feature row per sample."""
    backend = backend or OfflineBackend()
    points = sample_surface(mesh, cfg.spacing, cfg.seed)
    features = np.asarray(backend.point_features(mesh, points, cfg), dtype=np.float64)
    if features.shape[0] != points.shape[0]:
        raise ExtractionError(
            f"backend returned {features.shape[0]} feature rows for "
            f"{points.shape[0]} points"
        )
    return points, features


@dataclass(frozen=True)
class SceneObjectSpec:
    object_id: str
    label: str | None
    mesh_path: Path
    position: np.ndarray  # 3-vector, meters
    yaw: float  # radians about +z


def load_manifest(path: str | Path) -> tuple[str, list[SceneObjectSpec]]:
    """Scene manifest: {"scene_id": ..., "objects": [{"id", "label", "mesh",
    "position", "yaw"}, ...]}; mesh paths resolve relative to the manifest."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("objects"), list):
        raise ManifestError(f"{path}: manifest needs an 'objects' array")
    if not doc["objects"]:
        raise ManifestError(f"{path}: manifest has no objects")
    scene_id = str(doc.get("scene_id", path.stem))
    specs = []
    for i, entry in enumerate(doc["objects"]):
        if not isinstance(entry, dict) or "mesh" not in entry:
            raise ManifestError(f"{path}: object {i} needs a 'mesh' path")
        specs.append(
            SceneObjectSpec(
                object_id=str(entry.get("id", f"obj{i:02d}")),
                label=(None if entry.get("label") is None else str(entry["label"])),
                mesh_path=(path.parent / str(entry["mesh"])).resolve(),
                position=np.asarray(
                    entry.get("position", (0.0, 0.0, 0.0)), dtype=np.float64
                ),
                yaw=float(entry.get("yaw", 0.0)),
            )
        )
    ids = [s.object_id for s in specs]
    if len(set(ids)) != len(ids):
        raise ManifestError(f"{path}: duplicate object ids")
    return scene_id, specs


def _pose_points(points: np.ndarray, yaw: float, position: np.ndarray) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return points @ rot.T + position


def check_bundle(doc: dict) -> None:
    """Self-check against the normative bundle schema; raises on violation."""
    for key, kind in (
        ("scene_id", str), ("feature_dim", int), ("embedding_dim", int),
        ("objects", list),
    ):
        if not isinstance(doc.get(key), kind):
            raise BundleFormatError(f"bundle key '{key}' missing or wrong type")
    if not doc["objects"]:
        raise BundleFormatError("bundle has no objects")
    fd, ed = doc["feature_dim"], doc["embedding_dim"]
    if fd < 1 or ed < 1:
        raise BundleFormatError("dims must be positive")
    for obj in doc["objects"]:
        ctx = f"object '{obj.get('id', '?')}'"
        pts = np.asarray(obj["points"], dtype=np.float64)
        feats = np.asarray(obj["point_features"], dtype=np.float64)
        emb = np.asarray(obj["embedding"], dtype=np.float64)
        cen = np.asarray(obj["centroid"], dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise BundleFormatError(f"{ctx}: points must be N x 3, N >= 1")
        if feats.shape != (pts.shape[0], fd):
            raise BundleFormatError(
                f"{ctx}: point_features shape {feats.shape} != ({pts.shape[0]}, {fd})"
            )
        if emb.shape != (ed,):
            raise BundleFormatError(f"{ctx}: embedding length {emb.shape} != {ed}")
        if cen.shape != (3,):
            raise BundleFormatError(f"{ctx}: centroid must be a 3-vector")
        for name, arr in (("points", pts), ("point_features", feats),
                          ("embedding", emb), ("centroid", cen)):
            if not np.isfinite(arr).all():
                raise BundleFormatError(f"{ctx}: non-finite value in {name}")
        if np.linalg.norm(emb) < 1e-12:
            raise BundleFormatError(f"{ctx}: zero-norm embedding")
        if np.abs(pts.mean(axis=0) - cen).max() > 1e-6:
            raise BundleFormatError(f"{ctx}: centroid is not the point mean")


def export_bundle(
    manifest_path: str | Path,
    cfg: ExtractionConfig,
    out_path: str | Path,
    backend=None,
) -> dict:
    """Extract every object in the manifest and write the bundle JSON.

    Missing mesh files abort.  Per-object backend failures skip that object
    with a warning.  The assembled document is schema-checked before any
    bytes are written; all objects must agree on feature and embedding dims.
    """
    cfg.validate()
    backend = backend or OfflineBackend()
    scene_id, specs = load_manifest(manifest_path)

    objects = []
    for spec in specs:
        mesh = load_obj(spec.mesh_path)  # missing file raises with the path
        try:
            embedding = extract_object_embedding(mesh, cfg, backend)
            points_local, features = extract_point_features(mesh, cfg, backend)
        except ExtractionError as exc:
            warnings.warn(f"skipping object '{spec.object_id}': {exc}")
            continue
        points = _pose_points(points_local, spec.yaw, spec.position)
        objects.append(
            {
                "id": spec.object_id,
                "label": spec.label,
                "centroid": points.mean(axis=0).tolist(),
                "points": points.tolist(),
                "point_features": np.asarray(features, dtype=np.float64).tolist(),
                "embedding": np.asarray(embedding, dtype=np.float64).tolist(),
            }
        )
    if not objects:
        raise ExtractionError("every object failed extraction; nothing to write")

    widths = {len(o["point_features"][0]) for o in objects}
    depths = {len(o["embedding"]) for o in objects}
    if len(widths) != 1 or len(depths) != 1:
        raise BundleFormatError(
            f"objects disagree on dims: feature widths {sorted(widths)}, "
            f"embedding lengths {sorted(depths)}"
        )
    doc = {
        "scene_id": scene_id,
        "feature_dim": widths.pop(),
        "embedding_dim": depths.pop(),
        "objects": objects,
    }
    check_bundle(doc)
    Path(out_path).write_text(json.dumps(doc, sort_keys=True) + "\n")
    return doc
