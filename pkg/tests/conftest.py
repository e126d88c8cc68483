import numpy as np
import pytest

from scene_analogies.scene_model import SceneBundle, make_object


def tiny_object(object_id="obj", offset=(0.0, 0.0, 0.0), label="box", emb=None, dim=2):
    points = np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    ) + np.asarray(offset)
    features = np.arange(points.shape[0] * dim, dtype=np.float64).reshape(-1, dim)
    if emb is None:
        emb = np.array([1.0, 0.0, 0.0])
    return make_object(object_id, points, features, emb, label=label)


def tiny_scene(scene_id="tiny", n_objects=2, dim=2):
    objs = tuple(
        tiny_object(f"obj{i}", offset=(2.0 * i, 0.0, 0.0), emb=np.eye(3)[i % 3])
        for i in range(n_objects)
    )
    return SceneBundle(
        scene_id=scene_id, feature_dim=dim, embedding_dim=3, objects=objs
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260813)
