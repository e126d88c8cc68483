"""Coarse one-to-one object association between two scene graphs.

The matcher relaxes the quadratic assignment over candidate node pairs:
node-level cosine affinity on the diagonal, edge compatibility (feature
cosine x Gaussian length agreement) off-diagonal, principal eigenvector by
power iteration, then greedy one-to-one discretization with a relative
score cutoff.  Deterministic, including tie handling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph_builder import GraphEdge, SceneGraph

POWER_ITERS = 200
POWER_TOL = 1e-9
GREEDY_KEEP_RATIO = 0.1


@dataclass(frozen=True)
class AffinityConfig:
    node_weight: float = 1.0
    edge_feature_weight: float = 1.0
    length_sigma: float = 0.5
    min_node_affinity: float = 0.2

    def validate(self) -> None:
        if self.length_sigma <= 0:
            raise ValueError(f"length_sigma must be positive, got {self.length_sigma}")


@dataclass(frozen=True)
class MatchPair:
    target_id: str
    reference_id: str
    score: float


@dataclass(frozen=True)
class MatchSet:
    pairs: tuple[MatchPair, ...]

    def __len__(self) -> int:
        return len(self.pairs)

    def target_ids(self) -> list[str]:
        return [p.target_id for p in self.pairs]

    def reference_ids(self) -> list[str]:
        return [p.reference_id for p in self.pairs]


def node_affinity(f_a: np.ndarray, f_b: np.ndarray) -> float:
    """Cosine similarity of two nonzero embedding vectors, in [-1, 1]."""
    f_a = np.asarray(f_a, dtype=np.float64)
    f_b = np.asarray(f_b, dtype=np.float64)
    na = np.linalg.norm(f_a)
    nb = np.linalg.norm(f_b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("node affinity is undefined for zero vectors")
    return float(np.clip(np.dot(f_a, f_b) / (na * nb), -1.0, 1.0))


def _cosine_or_zero(f_a: np.ndarray, f_b: np.ndarray) -> float:
    na = np.linalg.norm(f_a)
    nb = np.linalg.norm(f_b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(f_a, f_b) / (na * nb), -1.0, 1.0))


def pairwise_affinity(e_tgt: GraphEdge, e_ref: GraphEdge, cfg: AffinityConfig) -> float:
    """Edge compatibility: clamped feature cosine times a Gaussian penalty on
    the length gap; lies in [0, edge_feature_weight]."""
    cfg.validate()
    cos = max(0.0, _cosine_or_zero(e_tgt.feature, e_ref.feature))
    gap = e_tgt.length - e_ref.length
    return cfg.edge_feature_weight * cos * float(
        np.exp(-(gap * gap) / (2.0 * cfg.length_sigma**2))
    )


def match_graphs(
    g_tgt: SceneGraph, g_ref: SceneGraph, cfg: AffinityConfig | None = None
) -> MatchSet:
    """Spectral relaxation + greedy discretization over candidate node pairs.

    Candidates are node pairs whose embedding cosine clears
    cfg.min_node_affinity (zero-norm features never qualify).  Scores are
    scaled so an isolated perfect match scores cfg.node_weight.  Greedy
    acceptance keeps the candidate list injective in both scenes and stops
    once scores fall below GREEDY_KEEP_RATIO of the first accepted score;
    ties break lexicographically by (target_id, reference_id).
    """
    if cfg is None:
        cfg = AffinityConfig()
    cfg.validate()
    if not g_tgt.nodes or not g_ref.nodes:
        raise ValueError("cannot match empty graphs")

    candidates: list[tuple[int, int, float]] = []
    for ti, tn in enumerate(g_tgt.nodes):
        if np.linalg.norm(tn.feature) == 0.0:
            continue
        for ri, rn in enumerate(g_ref.nodes):
            if np.linalg.norm(rn.feature) == 0.0:
                continue
            aff = node_affinity(tn.feature, rn.feature)
            if aff >= cfg.min_node_affinity:
                candidates.append((ti, ri, aff))
    if not candidates:
        return MatchSet(())

    n = len(candidates)
    m = np.zeros((n, n), dtype=np.float64)
    for a, (_, _, aff) in enumerate(candidates):
        m[a, a] = cfg.node_weight * aff
    tgt_edges = g_tgt.edge_lookup()
    ref_edges = g_ref.edge_lookup()
    for a in range(n):
        t1, r1, _ = candidates[a]
        for b in range(a + 1, n):
            t2, r2, _ = candidates[b]
            if t1 == t2 or r1 == r2:
                continue
            et = tgt_edges.get((min(t1, t2), max(t1, t2)))
            er = ref_edges.get((min(r1, r2), max(r1, r2)))
            if et is None or er is None:
                continue
            val = pairwise_affinity(et, er, cfg)
            m[a, b] = val
            m[b, a] = val

    x = _principal_eigenvector(m)
    lam = float(x @ (m @ x))
    peak = x.max()
    scores = lam * x / peak if peak > 0 else np.zeros(n)

    order = sorted(
        range(n),
        key=lambda a: (
            -scores[a],
            g_tgt.nodes[candidates[a][0]].object_id,
            g_ref.nodes[candidates[a][1]].object_id,
        ),
    )
    used_tgt: set[int] = set()
    used_ref: set[int] = set()
    pairs: list[MatchPair] = []
    floor = -np.inf
    for a in order:
        ti, ri, _ = candidates[a]
        if ti in used_tgt or ri in used_ref:
            continue
        if pairs and scores[a] < floor:
            break
        if not pairs:
            floor = GREEDY_KEEP_RATIO * scores[a]
        used_tgt.add(ti)
        used_ref.add(ri)
        pairs.append(
            MatchPair(
                target_id=g_tgt.nodes[ti].object_id,
                reference_id=g_ref.nodes[ri].object_id,
                score=float(scores[a]),
            )
        )
    return MatchSet(tuple(pairs))


def _principal_eigenvector(m: np.ndarray) -> np.ndarray:
    n = m.shape[0]
    x = np.full(n, 1.0 / np.sqrt(n))
    for _ in range(POWER_ITERS):
        y = m @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            break
        y /= norm
        delta = np.linalg.norm(y - x) / np.linalg.norm(x)
        x = y
        if delta < POWER_TOL:
            break
    return np.abs(x)


def match_dump(matches: MatchSet) -> list[dict]:
    return [
        {"target_id": p.target_id, "reference_id": p.reference_id, "score": p.score}
        for p in matches.pairs
    ]
