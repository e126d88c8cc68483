import json

import numpy as np
import pytest

from scene_analogies.config import PipelineConfig
from scene_analogies.feature_field import FieldConfig
from scene_analogies.fine_align import OptimConfig
from scene_analogies.scene_model import SceneBundle, make_object
from scene_analogies.tps_map import (
    DegenerateControlPointsError,
    ThinPlateSpline,
    affine_spline,
    build_scene_map,
    fit_tps,
    identity_spline,
    load_scene_map,
    save_scene_map,
    scene_map_to_dict,
)

from conftest import tiny_scene


def random_pairs(rng, n=20, wobble=0.3):
    src = rng.uniform(-1.0, 1.0, size=(n, 3))
    dst = src + wobble * rng.standard_normal((n, 3))
    return np.stack([src, dst], axis=1)


def fast_config(**kwargs):
    return PipelineConfig(
        field=FieldConfig(k=4),
        optim=OptimConfig(
            sample_spacing=0.01, search_radius=0.05, grid_step=0.05, descent_iters=0
        ),
        **kwargs,
    )


class TestFitTps:
    def test_interpolates_at_lambda_zero(self, rng):
        pairs = random_pairs(rng)
        spline = fit_tps(pairs, lam=0.0)
        got = spline.apply_many(pairs[:, 0, :])
        assert np.abs(got - pairs[:, 1, :]).max() <= 1e-6

    def test_reproduces_exact_affine_with_zero_weights(self, rng):
        src = rng.uniform(-1.0, 1.0, size=(12, 3))
        a_true = np.array([[1.2, 0.1, 0.0], [-0.1, 0.9, 0.2], [0.0, 0.3, 1.1]])
        b_true = np.array([0.5, -0.2, 1.0])
        dst = src @ a_true.T + b_true
        spline = fit_tps(np.stack([src, dst], axis=1), lam=0.0)
        assert np.abs(spline.kernel_weights).max() <= 1e-7
        assert np.abs(spline.affine_A - a_true).max() <= 1e-7
        assert np.abs(spline.affine_b - b_true).max() <= 1e-7

    @pytest.mark.parametrize("lam", [0.0, 1e-3, 1e-1])
    def test_side_conditions(self, rng, lam):
        pairs = random_pairs(rng)
        spline = fit_tps(pairs, lam=lam)
        w = spline.kernel_weights
        assert np.abs(w.sum(axis=0)).max() <= 1e-7
        assert np.abs(spline.control_points.T @ w).max() <= 1e-7

    def test_ridge_residual_monotone_in_lambda(self, rng):
        pairs = random_pairs(rng)

        def resid(lam):
            s = fit_tps(pairs, lam=lam)
            return float(
                np.linalg.norm(s.apply_many(pairs[:, 0, :]) - pairs[:, 1, :], axis=1).mean()
            )

        r0, r1, r2 = resid(0.0), resid(1e-3), resid(1e-1)
        assert r0 <= r1 + 1e-12
        assert r1 <= r2 + 1e-12

    def test_duplicate_sources_merge_to_mean_target(self, rng):
        base = random_pairs(rng, n=10, wobble=0.1)
        dup = np.array(
            [
                [[2.0, 2.0, 2.0], [2.1, 2.0, 2.0]],
                [[2.0, 2.0, 2.0], [2.3, 2.0, 2.0]],
            ]
        )
        spline = fit_tps(np.concatenate([base, dup]), lam=0.0)
        got = spline.apply(np.array([2.0, 2.0, 2.0]))
        assert np.abs(got - np.array([2.2, 2.0, 2.0])).max() <= 1e-6
        assert spline.control_points.shape[0] == 11

    def test_too_few_distinct_sources(self):
        p = np.zeros((5, 2, 3))
        p[:, 0, 0] = [0.0, 1.0, 2.0, 2.0, 2.0 + 1e-12]  # merges to 3 sources
        with pytest.raises(DegenerateControlPointsError, match="distinct"):
            fit_tps(p)

    def test_coplanar_sources(self, rng):
        src = rng.uniform(-1, 1, size=(8, 3))
        src[:, 2] = 0.25  # all in one plane
        with pytest.raises(DegenerateControlPointsError, match="coplanar"):
            fit_tps(np.stack([src, src], axis=1))

    def test_rejects_bad_arguments(self, rng):
        pairs = random_pairs(rng, n=6)
        with pytest.raises(ValueError):
            fit_tps(pairs, lam=-1.0)
        with pytest.raises(ValueError):
            fit_tps(np.zeros((4, 3)))


class TestSplineApply:
    def test_identity_spline(self, rng):
        s = identity_spline()
        q = rng.uniform(-5, 5, size=(10, 3))
        assert np.abs(s.apply_many(q) - q).max() == 0.0

    def test_affine_spline(self):
        s = affine_spline(np.diag([2.0, 1.0, 1.0]), np.array([0.0, 1.0, 0.0]))
        assert s.apply(np.array([1.0, 1.0, 1.0])) == pytest.approx([2.0, 2.0, 1.0])

    def test_apply_matches_apply_many(self, rng):
        spline = fit_tps(random_pairs(rng), lam=1e-3)
        q = rng.uniform(-1, 1, size=3)
        assert np.array_equal(spline.apply(q), spline.apply_many(q[None, :])[0])

    def test_rejects_non_finite(self, rng):
        spline = identity_spline()
        with pytest.raises(ValueError):
            spline.apply(np.array([np.nan, 0.0, 0.0]))
        with pytest.raises(ValueError):
            spline.apply_many(np.array([[np.inf, 0.0, 0.0]]))

    def test_lipschitz_probe_is_bounded(self, rng):
        spline = fit_tps(random_pairs(rng), lam=1e-3)
        x = rng.uniform(-1, 1, size=(200, 3))
        h = 1e-4 * rng.standard_normal((200, 3))
        num = np.linalg.norm(spline.apply_many(x + h) - spline.apply_many(x), axis=1)
        ratio = num / np.linalg.norm(h, axis=1)
        assert np.isfinite(ratio).all()
        assert ratio.max() < 1e2


class TestBuildSceneMap:
    def test_identity_pipeline_recovers_identity(self, rng):
        scene = tiny_scene(n_objects=2)
        scene_map = build_scene_map(scene, scene, fast_config())
        probes = rng.uniform(-0.5, 2.5, size=(50, 3))
        assert np.abs(scene_map.spline.apply_many(probes) - probes).max() <= 1e-6
        stats = scene_map.provenance.displacement_stats
        assert stats["cost_after"] <= 1e-9
        assert scene_map.provenance.diagnostics == []
        assert len(scene_map.provenance.matches) == 2

    def test_empty_matches_fall_back_to_identity(self):
        a = tiny_scene("a", n_objects=1)
        objs = tuple(
            make_object(o.object_id, o.points, o.point_features, np.array([0.0, 1.0, 0.0]))
            for o in a.objects
        )
        b = SceneBundle("b", 2, 3, objs)  # orthogonal embedding: no candidates
        scene_map = build_scene_map(a, b, fast_config())
        assert scene_map.spline.control_points.shape[0] == 0
        assert np.array_equal(scene_map.spline.affine_A, np.eye(3))
        assert any("empty match set" in d for d in scene_map.provenance.diagnostics)
        assert scene_map.provenance.affine_kinds == {"obj0": "identity"}

    def test_planar_scene_falls_back_to_largest_cluster_affine(self):
        # all sample points in one plane: TPS control points are degenerate
        quad = np.array(
            [[0.0, 0, 0], [0.5, 0, 0], [0.0, 0.5, 0], [0.5, 0.5, 0]]
        )
        shift = np.array([0.0, 2.0, 0.0])

        def planar(scene_id, offset):
            objs = tuple(
                make_object(
                    f"o{i}",
                    quad + offset + np.array([i * 1.0, 0.0, 0.0]),
                    np.tile(np.arange(4.0)[:, None], (1, 2)),
                    np.eye(3)[i],
                )
                for i in range(2)
            )
            return SceneBundle(scene_id, 2, 3, objs)

        scene_map = build_scene_map(planar("t", np.zeros(3)), planar("r", shift), fast_config())
        assert any(
            d.startswith("TPS degenerate") for d in scene_map.provenance.diagnostics
        )
        assert scene_map.spline.control_points.shape[0] == 0
        assert scene_map.spline.affine_b == pytest.approx(shift, abs=1e-9)

    def test_control_point_cap_is_respected(self):
        scene = tiny_scene(n_objects=2)
        scene_map = build_scene_map(scene, scene, fast_config(tps_max_control_points=5))
        assert scene_map.spline.control_points.shape[0] <= 5

    def test_stats_fields_present(self):
        scene = tiny_scene(n_objects=2)
        stats = build_scene_map(scene, scene, fast_config()).provenance.displacement_stats
        assert set(stats) == {
            "point_count",
            "mean_abs_delta",
            "max_abs_delta",
            "cost_before",
            "cost_after",
        }
        assert stats["point_count"] == 8


class TestArtifactIo:
    def test_round_trip_is_exact(self, tmp_path, rng):
        scene = tiny_scene(n_objects=2)
        scene_map = build_scene_map(scene, scene, fast_config())
        path = tmp_path / "map.json"
        save_scene_map(scene_map, path)
        loaded = load_scene_map(path)
        probes = rng.uniform(-1, 3, size=(50, 3))
        a = scene_map.spline.apply_many(probes)
        b = loaded.spline.apply_many(probes)
        assert np.array_equal(a, b)  # full-precision floats survive JSON
        assert loaded.provenance.matches == scene_map.provenance.matches
        assert loaded.config == scene_map.config

    def test_resave_is_byte_identical(self, tmp_path):
        scene = tiny_scene(n_objects=2)
        scene_map = build_scene_map(scene, scene, fast_config())
        p1 = tmp_path / "a.json"
        p2 = tmp_path / "b.json"
        save_scene_map(scene_map, p1)
        save_scene_map(load_scene_map(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_wrong_format(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"format": "other"}))
        with pytest.raises(ValueError, match="not a scene-map artifact"):
            load_scene_map(path)

    def test_dict_contains_config(self):
        scene = tiny_scene(n_objects=2)
        doc = scene_map_to_dict(build_scene_map(scene, scene, fast_config()))
        assert doc["format"] == "scene-map"
        assert doc["config"]["field"]["k"] == 4
