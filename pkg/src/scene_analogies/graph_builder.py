"""Sparse object-centric scene graph with feature-averaged edges.

Nodes carry object centroids and embedding vectors verbatim; an undirected
edge connects two nodes whenever their centroid distance is strictly below
the threshold, and its feature is the mean of the endpoint features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene_model import SceneBundle

DEFAULT_EDGE_THRESHOLD = 1.5


@dataclass(frozen=True)
class GraphNode:
    object_id: str
    centroid: np.ndarray  # (3,)
    feature: np.ndarray  # (E,)


@dataclass(frozen=True)
class GraphEdge:
    endpoints: tuple[int, int]  # node indices, i < j
    length: float
    feature: np.ndarray  # (E,)


@dataclass(frozen=True)
class SceneGraph:
    nodes: tuple[GraphNode, ...]
    edges: tuple[GraphEdge, ...]
    edge_threshold: float

    def edge_lookup(self) -> dict[tuple[int, int], GraphEdge]:
        return {e.endpoints: e for e in self.edges}

    def node_index(self, object_id: str) -> int:
        for i, n in enumerate(self.nodes):
            if n.object_id == object_id:
                return i
        raise KeyError(object_id)


def build_graph(
    scene: SceneBundle, edge_threshold: float = DEFAULT_EDGE_THRESHOLD
) -> SceneGraph:
    """One node per object in scene order; edges for centroid pairs closer
    than `edge_threshold` (strict), featured with the endpoint mean."""
    if edge_threshold <= 0:
        raise ValueError(f"edge_threshold must be positive, got {edge_threshold}")
    nodes = tuple(
        GraphNode(o.object_id, o.centroid, o.embedding) for o in scene.objects
    )
    edges = []
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            length = float(np.linalg.norm(nodes[i].centroid - nodes[j].centroid))
            if length < edge_threshold:
                feature = 0.5 * (nodes[i].feature + nodes[j].feature)
                feature.setflags(write=False)
                edges.append(GraphEdge((i, j), length, feature))
    return SceneGraph(nodes=nodes, edges=tuple(edges), edge_threshold=edge_threshold)


def graph_debug_dump(graph: SceneGraph) -> dict:
    """JSON-ready digest (node ids/centroids, edge index pairs and lengths)."""
    return {
        "edge_threshold": graph.edge_threshold,
        "nodes": [
            {"id": n.object_id, "centroid": n.centroid.tolist()} for n in graph.nodes
        ],
        "edges": [
            {"endpoints": list(e.endpoints), "length": e.length} for e in graph.edges
        ],
    }
