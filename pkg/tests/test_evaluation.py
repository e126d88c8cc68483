import numpy as np
import pytest

from scene_analogies.config import PipelineConfig
from scene_analogies.evaluation import (
    DEFAULT_THRESHOLDS,
    chamfer_accuracy,
    evaluate_map,
    report_table,
    report_to_dict,
)
from scene_analogies.feature_field import FieldConfig
from scene_analogies.fine_align import OptimConfig
from scene_analogies.tps_map import build_scene_map

from conftest import tiny_scene


def brute_force_nearest(mapped, reference):
    mapped = np.atleast_2d(mapped)
    reference = np.atleast_2d(reference)
    out = np.empty(mapped.shape[0])
    for i, p in enumerate(mapped):
        out[i] = np.sqrt(((reference - p) ** 2).sum(axis=1).min())
    return out


class TestChamferAccuracy:
    def test_identical_clouds_are_perfect(self, rng):
        cloud = rng.uniform(-1, 1, size=(100, 3))
        report = chamfer_accuracy(cloud, cloud)
        assert report.accuracies == (1.0, 1.0, 1.0)
        assert report.nearest_distances.max() == 0.0
        assert report.point_count == 100

    def test_single_point_between_thresholds(self):
        # distance 0.18: misses 0.15, clears 0.20 and 0.25 (strict comparison)
        report = chamfer_accuracy(
            np.array([[0.18, 0.0, 0.0]]), np.array([[0.0, 0.0, 0.0]])
        )
        assert report.accuracies == (0.0, 1.0, 1.0)

    def test_offset_between_second_and_third(self):
        report = chamfer_accuracy(
            np.array([[0.22, 0.0, 0.0]]), np.array([[0.0, 0.0, 0.0]])
        )
        assert report.accuracies == (0.0, 0.0, 1.0)

    def test_threshold_hit_is_strict(self):
        report = chamfer_accuracy(
            np.array([[0.15, 0.0, 0.0]]),
            np.array([[0.0, 0.0, 0.0]]),
            thresholds=(0.15,),
        )
        assert report.accuracies == (0.0,)

    def test_matches_brute_force_oracle(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 60))
            m = int(rng.integers(1, 60))
            mapped = rng.uniform(-1, 1, size=(n, 3))
            reference = rng.uniform(-1, 1, size=(m, 3))
            report = chamfer_accuracy(mapped, reference)
            oracle = brute_force_nearest(mapped, reference)
            assert np.array_equal(report.nearest_distances, oracle)
            for t, a in zip(report.thresholds, report.accuracies):
                assert a == float(np.mean(oracle < t))

    def test_monotone_in_threshold(self, rng):
        mapped = rng.uniform(-1, 1, size=(50, 3))
        reference = rng.uniform(-1, 1, size=(50, 3))
        ts = (0.05, 0.1, 0.2, 0.4, 0.8)
        report = chamfer_accuracy(mapped, reference, thresholds=ts)
        accs = list(report.accuracies)
        assert accs == sorted(accs)

    def test_reference_permutation_invariant(self, rng):
        mapped = rng.uniform(-1, 1, size=(30, 3))
        reference = rng.uniform(-1, 1, size=(40, 3))
        a = chamfer_accuracy(mapped, reference)
        b = chamfer_accuracy(mapped, reference[rng.permutation(40)])
        assert np.allclose(a.nearest_distances, b.nearest_distances, atol=1e-12)
        assert a.accuracies == b.accuracies

    def test_rejects_empty_or_bad_thresholds(self, rng):
        cloud = rng.uniform(size=(5, 3))
        with pytest.raises(ValueError):
            chamfer_accuracy(np.zeros((0, 3)), cloud)
        with pytest.raises(ValueError):
            chamfer_accuracy(cloud, np.zeros((0, 3)))
        with pytest.raises(ValueError):
            chamfer_accuracy(cloud, cloud, thresholds=(0.0,))

    def test_default_thresholds(self):
        assert DEFAULT_THRESHOLDS == (0.15, 0.20, 0.25)


class TestEvaluateMap:
    def test_identity_map_scores_one(self):
        scene = tiny_scene(n_objects=2)
        cfg = PipelineConfig(
            field=FieldConfig(k=4),
            optim=OptimConfig(
                sample_spacing=0.01, search_radius=0.05, grid_step=0.05, descent_iters=0
            ),
        )
        scene_map = build_scene_map(scene, scene, cfg)
        report = evaluate_map(scene_map, scene, scene)
        assert report.accuracies == (1.0, 1.0, 1.0)
        assert report.point_count == scene.all_points().shape[0]


class TestReportOutput:
    def test_dict_fields(self, rng):
        cloud = rng.uniform(size=(10, 3))
        doc = report_to_dict(chamfer_accuracy(cloud, cloud))
        assert doc == {
            "thresholds": [0.15, 0.20, 0.25],
            "accuracies": [1.0, 1.0, 1.0],
            "point_count": 10,
            "mean_nearest_distance": 0.0,
        }

    def test_table_layout(self, rng):
        cloud = rng.uniform(size=(10, 3))
        table = report_table(chamfer_accuracy(cloud, cloud))
        lines = table.splitlines()
        assert lines[0] == "Threshold  0.15  0.20  0.25"
        assert lines[1] == "Accuracy   1.00  1.00  1.00"
