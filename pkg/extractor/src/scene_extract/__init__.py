"""Scene-bundle extraction from triangle meshes.

Turns a manifest of posed meshes into the scene-bundle JSON consumed by the
scene-mapping pipeline: per-object embeddings averaged over a ring of views
and per-point shape features over area-uniform surface samples.  The bundled
backend is deterministic and offline; real embedding/shape models plug in by
implementing its two-method interface.
"""

__version__ = "0.1.0"

from .backend import ExtractionError, OfflineBackend
from .extract import (
    BundleFormatError,
    ExtractionConfig,
    ManifestError,
    SceneObjectSpec,
    check_bundle,
    export_bundle,
    extract_object_embedding,
    extract_point_features,
    load_manifest,
    view_ring,
)
from .mesh import MeshError, TriMesh, load_obj, sample_surface

__all__ = [
    "BundleFormatError",
    "ExtractionConfig",
    "ExtractionError",
    "ManifestError",
    "MeshError",
    "OfflineBackend",
    "SceneObjectSpec",
    "TriMesh",
    "check_bundle",
    "export_bundle",
    "extract_object_embedding",
    "extract_point_features",
    "load_manifest",
    "load_obj",
    "sample_surface",
    "view_ring",
]
