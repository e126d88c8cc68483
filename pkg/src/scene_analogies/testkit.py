"""Synthetic scenes with known correspondences.

Objects are box surfaces placed by rigid poses.  Per-point features are
smooth functions of the box-local coordinates, computed before the pose is
applied, so two instances of a template carry identical features at
corresponding points no matter where they stand.  Object embeddings hash the
label into a fixed unit vector: equal labels agree exactly, distinct labels
are near-orthogonal in expectation.  Scene pairs remember the transform that
moved each group, which gives tests an exact map to compare against.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .coarse_align import AffineMap
from .scene_model import ObjectInstance, SceneBundle, make_object

LABEL_POOL = ("table", "chair", "lamp", "shelf", "mug", "sofa", "plant", "crate")


def _label_seed(label: str, salt: int) -> int:
    digest = hashlib.sha256(f"{salt}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def label_embedding(label: str, dim: int = 32) -> np.ndarray:
    """Deterministic unit vector derived from the label text."""
    rng = np.random.default_rng(_label_seed(label, salt=1))
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


def box_surface_points(extents: np.ndarray, spacing: float) -> np.ndarray:
    """Grid samples on the surface of an origin-centered axis-aligned box.

    Rows are unique and lexicographically sorted, so the layout depends only
    on extents and spacing.
    """
    extents = np.asarray(extents, dtype=np.float64).reshape(3)
    if np.any(extents <= 0) or spacing <= 0:
        raise ValueError("extents and spacing must be positive")
    half = extents / 2.0
    axes = [
        np.linspace(-half[d], half[d], max(2, int(round(extents[d] / spacing)) + 1))
        for d in range(3)
    ]
    faces = []
    for fixed in range(3):
        u, v = [d for d in range(3) if d != fixed]
        gu, gv = np.meshgrid(axes[u], axes[v], indexing="ij")
        for sign in (-1.0, 1.0):
            pts = np.zeros((gu.size, 3))
            pts[:, u] = gu.ravel()
            pts[:, v] = gv.ravel()
            pts[:, fixed] = sign * half[fixed]
            faces.append(pts)
    return np.unique(np.concatenate(faces, axis=0), axis=0)


def local_features(points_local: np.ndarray, label: str, dim: int) -> np.ndarray:
    """Smooth label-specific descriptors of box-local position.

    Random Fourier projections of the local coordinates: nearby points get
    similar rows, distant points decorrelate, and the same local position on
    any instance of the template gets the same row.
    """
    points_local = np.atleast_2d(np.asarray(points_local, dtype=np.float64))
    rng = np.random.default_rng(_label_seed(label, salt=2))
    omega = rng.normal(0.0, 7.0, size=(3, dim))
    phase = rng.uniform(0.0, 2.0 * math.pi, size=dim)
    return math.sqrt(2.0 / dim) * np.cos(points_local @ omega + phase)


def rotation_about_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class BoxTemplate:
    label: str
    extents: tuple[float, float, float]


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ np.asarray(self.rotation).T + np.asarray(
            self.translation
        )


def yaw_pose(yaw: float, translation) -> Pose:
    return Pose(
        rotation=rotation_about_z(yaw),
        translation=np.asarray(translation, dtype=np.float64),
    )


@dataclass(frozen=True)
class SynthSpec:
    seed: int
    templates: tuple[BoxTemplate, ...]
    layout: tuple[tuple[int, Pose], ...]  # (template index, pose)
    feature_dim: int = 16
    embedding_dim: int = 32
    spacing: float = 0.05
    feature_noise: float = 0.0

    def validate(self) -> None:
        if not self.templates or not self.layout:
            raise ValueError("spec needs at least one template and one placement")
        for idx, _pose in self.layout:
            if not 0 <= idx < len(self.templates):
                raise ValueError(f"layout references missing template {idx}")
        if self.spacing <= 0 or self.feature_dim < 1 or self.embedding_dim < 1:
            raise ValueError("spacing and dims must be positive")
        if self.feature_noise < 0:
            raise ValueError("feature_noise must be >= 0")


def gen_scene(spec: SynthSpec, scene_id: str | None = None) -> SceneBundle:
    """Deterministic bundle: box surfaces posed per layout, local-frame
    features (optionally noised), label-hash embeddings."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    objects = []
    for i, (tpl_idx, pose) in enumerate(spec.layout):
        tpl = spec.templates[tpl_idx]
        local = box_surface_points(np.asarray(tpl.extents), spec.spacing)
        feats = local_features(local, tpl.label, spec.feature_dim)
        if spec.feature_noise > 0:
            feats = feats + rng.normal(0.0, spec.feature_noise, size=feats.shape)
        objects.append(
            make_object(
                object_id=f"obj{i:02d}_{tpl.label}",
                points=pose.apply(local),
                point_features=feats,
                embedding=label_embedding(tpl.label, spec.embedding_dim),
                label=tpl.label,
            )
        )
    return SceneBundle(
        scene_id=scene_id or f"synthetic_{spec.seed:04d}",
        feature_dim=spec.feature_dim,
        embedding_dim=spec.embedding_dim,
        objects=tuple(objects),
    )


@dataclass(frozen=True)
class GroupMove:
    """Transform applied to a set of layout indices to build the reference."""

    indices: tuple[int, ...]
    A: np.ndarray  # (3, 3)
    b: np.ndarray  # (3,)
    kind: str = "rigid"

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ np.asarray(self.A).T + np.asarray(self.b)

    def as_affine(self) -> AffineMap:
        return AffineMap(
            A=np.asarray(self.A, dtype=np.float64),
            b=np.asarray(self.b, dtype=np.float64),
            kind=self.kind,
        )


def rigid_move(indices, yaw: float, translation) -> GroupMove:
    return GroupMove(
        indices=tuple(indices),
        A=rotation_about_z(yaw),
        b=np.asarray(translation, dtype=np.float64),
    )


@dataclass(frozen=True)
class PairOracle:
    """Exact target-to-reference map for a generated pair.

    Points are attributed to the group of the nearest target object
    centroid; objects carry their own group's transform.
    """

    moves: tuple[GroupMove, ...]
    object_group: dict[str, int]  # object_id -> index into moves
    object_centroids: np.ndarray  # (n_objects, 3), layout order
    object_ids: tuple[str, ...]

    def map_object(self, object_id: str) -> AffineMap:
        return self.moves[self.object_group[object_id]].as_affine()

    def map_points(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        d2 = ((points[:, None, :] - self.object_centroids[None, :, :]) ** 2).sum(-1)
        owner = np.argmin(d2, axis=1)
        out = np.empty_like(points)
        for i, oid in enumerate(self.object_ids):
            sel = owner == i
            if np.any(sel):
                out[sel] = self.moves[self.object_group[oid]].apply(points[sel])
        return out


def gen_pair(
    spec: SynthSpec, group_transforms: list[GroupMove] | tuple[GroupMove, ...]
) -> tuple[SceneBundle, SceneBundle, PairOracle]:
    """Target scene plus a reference built by moving object groups.

    Layout indices not covered by any group stay in place (identity move).
    Overlapping groups are an error.
    """
    target = gen_scene(spec)
    n = len(spec.layout)
    seen: set[int] = set()
    for move in group_transforms:
        bad = [i for i in move.indices if not 0 <= i < n]
        if bad:
            raise ValueError(f"group references missing layout indices {bad}")
        overlap = seen.intersection(move.indices)
        if overlap:
            raise ValueError(f"layout indices {sorted(overlap)} in multiple groups")
        seen.update(move.indices)

    moves = list(group_transforms)
    leftover = tuple(i for i in range(n) if i not in seen)
    if leftover:
        moves.append(GroupMove(indices=leftover, A=np.eye(3), b=np.zeros(3), kind="identity"))

    object_group: dict[str, int] = {}
    ref_objects: list[ObjectInstance] = []
    for i, obj in enumerate(target.objects):
        g = next(gi for gi, m in enumerate(moves) if i in m.indices)
        object_group[obj.object_id] = g
        ref_objects.append(
            make_object(
                object_id=obj.object_id,
                points=moves[g].apply(obj.points),
                point_features=obj.point_features,
                embedding=obj.embedding,
                label=obj.label,
            )
        )
    reference = SceneBundle(
        scene_id=f"{target.scene_id}_moved",
        feature_dim=spec.feature_dim,
        embedding_dim=spec.embedding_dim,
        objects=tuple(ref_objects),
    )
    oracle = PairOracle(
        moves=tuple(moves),
        object_group=object_group,
        object_centroids=np.stack([o.centroid for o in target.objects]),
        object_ids=tuple(o.object_id for o in target.objects),
    )
    return target, reference, oracle


# ---------------------------------------------------------------------------
# Randomized layout helpers used by the property and acceptance suites.
# ---------------------------------------------------------------------------


def random_spec(
    seed: int,
    count: int = 4,
    spacing: float = 0.05,
    feature_dim: int = 16,
    embedding_dim: int = 32,
    spread: float = 0.7,
    min_separation: float = 0.55,
    feature_noise: float = 0.0,
) -> SynthSpec:
    """Non-colliding random box layout with distinct labels.

    Rejection-sampled centers inside a flat slab; raises if the slab cannot
    fit `count` boxes at the requested separation.
    """
    if count > len(LABEL_POOL):
        raise ValueError(f"at most {len(LABEL_POOL)} objects per scene")
    rng = np.random.default_rng(seed)
    labels = list(rng.permutation(np.asarray(LABEL_POOL))[:count])
    centers: list[np.ndarray] = []
    for _ in range(count):
        for _attempt in range(1000):
            cand = rng.uniform(-spread, spread, size=3) * np.array([1.0, 1.0, 0.3])
            if all(np.linalg.norm(cand - c) >= min_separation for c in centers):
                centers.append(cand)
                break
        else:
            raise RuntimeError("could not place boxes without collisions")
    templates = tuple(
        BoxTemplate(label=str(lbl), extents=tuple(rng.uniform(0.25, 0.45, size=3)))
        for lbl in labels
    )
    layout = tuple(
        (i, yaw_pose(float(rng.uniform(-math.pi, math.pi)), centers[i]))
        for i in range(count)
    )
    return SynthSpec(
        seed=seed,
        templates=templates,
        layout=layout,
        feature_dim=feature_dim,
        embedding_dim=embedding_dim,
        spacing=spacing,
        feature_noise=feature_noise,
    )


def random_scene(seed: int, count: int = 4, spacing: float = 0.05, **kwargs) -> SceneBundle:
    return gen_scene(random_spec(seed, count=count, spacing=spacing, **kwargs))


@dataclass(frozen=True)
class ScenePair:
    target: SceneBundle
    reference: SceneBundle
    oracle: PairOracle
    moves: tuple[GroupMove, ...] = field(default_factory=tuple)


_GROUP_BASES = (
    (0.0, 0.0, 0.0),
    (3.0, 0.0, 0.0),
    (0.0, 3.0, 0.0),
    (3.0, 3.0, 0.0),
    (-3.0, 0.0, 0.0),
)


def make_scene_pair(
    seed: int,
    group_count: int = 2,
    objects_per_group: int = 2,
    max_yaw: float = math.pi / 4.0,
    max_shift: float = 0.4,
    group_gap: float = 2.5,
    spacing: float = 0.05,
    feature_dim: int = 16,
    embedding_dim: int = 32,
    feature_noise: float = 0.0,
) -> ScenePair:
    """Random pair whose reference moves object groups rigidly.

    Each group occupies its own patch of the target (patches `group_gap`
    apart) and its move lands near a well-separated base, so the translation
    vectors of correct matches form one tight cluster per group and the
    fitted map can bend between groups through empty space.
    """
    if group_count > len(_GROUP_BASES):
        raise ValueError(f"at most {len(_GROUP_BASES)} groups")
    count = group_count * objects_per_group
    if count > len(LABEL_POOL):
        raise ValueError(f"at most {len(LABEL_POOL)} objects per scene")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 7)))
    labels = list(rng.permutation(np.asarray(LABEL_POOL))[:count])
    templates = tuple(
        BoxTemplate(label=str(lbl), extents=tuple(rng.uniform(0.25, 0.45, size=3)))
        for lbl in labels
    )
    layout = []
    for g in range(group_count):
        base = np.asarray(_GROUP_BASES[g]) * (group_gap / 3.0)
        placed: list[np.ndarray] = []
        for _ in range(objects_per_group):
            for _attempt in range(1000):
                cand = base + rng.uniform(-0.7, 0.7, size=3) * np.array([1.0, 1.0, 0.3])
                if all(np.linalg.norm(cand - c) >= 0.55 for c in placed):
                    placed.append(cand)
                    break
            else:
                raise RuntimeError("could not place boxes without collisions")
        for center in placed:
            i = len(layout)
            layout.append((i, yaw_pose(float(rng.uniform(-math.pi, math.pi)), center)))
    spec = SynthSpec(
        seed=seed,
        templates=templates,
        layout=tuple(layout),
        feature_dim=feature_dim,
        embedding_dim=embedding_dim,
        spacing=spacing,
        feature_noise=feature_noise,
    )
    moves = []
    for g in range(group_count):
        idxs = range(g * objects_per_group, (g + 1) * objects_per_group)
        yaw = float(rng.uniform(-max_yaw, max_yaw)) if max_yaw > 0 else 0.0
        shift = np.asarray(_GROUP_BASES[g]) + rng.uniform(-max_shift, max_shift, size=3)
        moves.append(rigid_move(idxs, yaw, shift))
    target, reference, oracle = gen_pair(spec, moves)
    return ScenePair(target=target, reference=reference, oracle=oracle, moves=tuple(moves))
