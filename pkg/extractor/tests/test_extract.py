import json
import math

import numpy as np
import pytest

from scene_extract.backend import ExtractionError, OfflineBackend
from scene_extract.extract import (
    BundleFormatError,
    ExtractionConfig,
    ManifestError,
    check_bundle,
    export_bundle,
    extract_object_embedding,
    extract_point_features,
    load_manifest,
    view_ring,
)
from scene_extract.mesh import MeshError, load_obj, sample_surface
from scene_extract.cli import main

from conftest import write_box_obj, write_manifest, write_wedge_obj

CFG = ExtractionConfig(feature_dim=12, embedding_dim=16, spacing=0.06)


class TestViewRing:
    def test_eight_views_at_fixed_elevation(self):
        ring = view_ring(ExtractionConfig())
        assert len(ring) == 8
        az = [a for a, _ in ring]
        assert az == pytest.approx([2 * math.pi * i / 8 for i in range(8)])
        assert [e for _, e in ring] == pytest.approx([math.radians(30.0)] * 8)

    def test_validation(self):
        with pytest.raises(ValueError, match="views"):
            ExtractionConfig(views=0).validate()
        with pytest.raises(ValueError, match="spacing"):
            ExtractionConfig(spacing=0.0).validate()


class TestObjectEmbedding:
    def test_unit_norm_and_deterministic(self, box_path):
        mesh = load_obj(box_path)
        a = extract_object_embedding(mesh, CFG)
        b = extract_object_embedding(mesh, CFG)
        assert a.shape == (16,)
        assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-12)
        assert np.array_equal(a, b)

    def test_duplicate_views_mean_idempotent(self, box_path):
        mesh = load_obj(box_path)
        ring = view_ring(CFG)
        once = extract_object_embedding(mesh, CFG, poses=ring)
        twice = extract_object_embedding(mesh, CFG, poses=ring + ring)
        assert np.abs(once - twice).max() <= 1e-12

    def test_single_view_is_that_view(self, box_path):
        mesh = load_obj(box_path)
        pose = [(0.3, 0.5)]
        emb = extract_object_embedding(mesh, CFG, poses=pose)
        raw = OfflineBackend().view_embedding(mesh, 0.3, 0.5, CFG)
        assert np.abs(emb - raw / np.linalg.norm(raw)).max() <= 1e-12

    def test_model_id_changes_embedding(self, box_path):
        mesh = load_obj(box_path)
        other = ExtractionConfig(
            feature_dim=12, embedding_dim=16, spacing=0.06, vl_model_id="other-model"
        )
        assert not np.array_equal(
            extract_object_embedding(mesh, CFG), extract_object_embedding(mesh, other)
        )

    def test_faceless_mesh_raises(self, tmp_path):
        p = tmp_path / "m.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\n")
        with pytest.raises(ExtractionError, match="renderable"):
            extract_object_embedding(load_obj(p), CFG)


class TestPointFeatures:
    def test_row_contract_and_determinism(self, box_path):
        mesh = load_obj(box_path)
        pts_a, feats_a = extract_point_features(mesh, CFG)
        pts_b, feats_b = extract_point_features(mesh, CFG)
        assert feats_a.shape == (len(pts_a), CFG.feature_dim)
        assert np.array_equal(pts_a, pts_b)
        assert np.array_equal(feats_a, feats_b)

    def test_mirrored_points_more_similar_than_random(self, box_path):
        # the box is symmetric about y=0, so mirrored samples stay on surface
        mesh = load_obj(box_path)
        backend = OfflineBackend()
        pts = sample_surface(mesh, 0.05, seed=2)
        mirrored = pts * np.array([1.0, -1.0, 1.0])
        f = backend.point_features(mesh, pts, CFG)
        g = backend.point_features(mesh, mirrored, CFG)

        def med_cos(a, b):
            num = (a * b).sum(axis=1)
            den = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
            return float(np.median(num / den))

        rng = np.random.default_rng(0)
        shuffled = f[rng.permutation(len(f))]
        assert med_cos(f, g) > med_cos(f, shuffled) + 0.05

    def test_backend_row_mismatch_detected(self, box_path):
        class BadBackend(OfflineBackend):
            def point_features(self, mesh, points, cfg):
                return super().point_features(mesh, points, cfg)[:-1]

        with pytest.raises(ExtractionError, match="feature rows"):
            extract_point_features(load_obj(box_path), CFG, backend=BadBackend())


class TestManifest:
    def test_defaults_and_path_resolution(self, tmp_path, box_path):
        man = write_manifest(tmp_path / "scene.json", [{"mesh": "box.obj"}])
        scene_id, specs = load_manifest(man)
        assert scene_id == "toy"
        assert specs[0].object_id == "obj00"
        assert specs[0].mesh_path == box_path.resolve()
        assert specs[0].yaw == 0.0
        assert np.array_equal(specs[0].position, np.zeros(3))

    def test_duplicate_ids_rejected(self, tmp_path):
        man = write_manifest(
            tmp_path / "scene.json",
            [{"id": "a", "mesh": "m.obj"}, {"id": "a", "mesh": "m.obj"}],
        )
        with pytest.raises(ManifestError, match="duplicate"):
            load_manifest(man)

    def test_empty_objects_rejected(self, tmp_path):
        man = write_manifest(tmp_path / "scene.json", [])
        with pytest.raises(ManifestError, match="no objects"):
            load_manifest(man)

    def test_invalid_json_rejected(self, tmp_path):
        p = tmp_path / "scene.json"
        p.write_text("{nope")
        with pytest.raises(ManifestError, match="invalid JSON"):
            load_manifest(p)

    def test_missing_mesh_key_rejected(self, tmp_path):
        man = write_manifest(tmp_path / "scene.json", [{"id": "a"}])
        with pytest.raises(ManifestError, match="'mesh'"):
            load_manifest(man)


class TestExportBundle:
    def make_scene(self, tmp_path):
        write_box_obj(tmp_path / "box.obj")
        write_wedge_obj(tmp_path / "wedge.obj")
        return write_manifest(
            tmp_path / "scene.json",
            [
                {"id": "mug0", "label": "mug", "mesh": "box.obj"},
                {"id": "ramp0", "label": "ramp", "mesh": "wedge.obj",
                 "position": [0.9, 0.0, 0.0], "yaw": 0.5},
            ],
        )

    def test_bundle_structure(self, tmp_path):
        out = tmp_path / "bundle.json"
        doc = export_bundle(self.make_scene(tmp_path), CFG, out)
        assert out.is_file()
        assert json.loads(out.read_text()) == doc
        assert doc["feature_dim"] == 12 and doc["embedding_dim"] == 16
        assert [o["id"] for o in doc["objects"]] == ["mug0", "ramp0"]
        for obj in doc["objects"]:
            pts = np.asarray(obj["points"])
            assert np.asarray(obj["point_features"]).shape == (len(pts), 12)
            assert np.abs(pts.mean(axis=0) - obj["centroid"]).max() <= 1e-9

    def test_pose_applied(self, tmp_path):
        doc = export_bundle(self.make_scene(tmp_path), CFG, tmp_path / "b.json")
        ramp = doc["objects"][1]
        # wedge local centroid sits near the origin corner; position dominates
        assert abs(ramp["centroid"][0] - 0.9) < 0.3
        mug = doc["objects"][0]
        assert np.abs(np.asarray(mug["centroid"])).max() < 0.05

    def test_rerun_byte_identical(self, tmp_path):
        man = self.make_scene(tmp_path)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        export_bundle(man, CFG, a)
        export_bundle(man, CFG, b)
        assert a.read_bytes() == b.read_bytes()

    def test_missing_mesh_aborts_with_path(self, tmp_path):
        man = write_manifest(
            tmp_path / "scene.json", [{"id": "a", "mesh": "gone.obj"}]
        )
        out = tmp_path / "bundle.json"
        with pytest.raises(MeshError, match="gone.obj"):
            export_bundle(man, CFG, out)
        assert not out.exists()

    def test_degenerate_object_skipped_with_warning(self, tmp_path):
        write_box_obj(tmp_path / "box.obj")
        (tmp_path / "flat.obj").write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\n")
        man = write_manifest(
            tmp_path / "scene.json",
            [{"id": "good", "mesh": "box.obj"}, {"id": "bad", "mesh": "flat.obj"}],
        )
        out = tmp_path / "bundle.json"
        with pytest.warns(UserWarning, match="skipping object 'bad'"):
            doc = export_bundle(man, CFG, out)
        assert [o["id"] for o in doc["objects"]] == ["good"]

    def test_all_objects_failing_aborts(self, tmp_path):
        (tmp_path / "flat.obj").write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\n")
        man = write_manifest(tmp_path / "scene.json", [{"mesh": "flat.obj"}])
        out = tmp_path / "bundle.json"
        with pytest.warns(UserWarning):
            with pytest.raises(ExtractionError, match="every object failed"):
                export_bundle(man, CFG, out)
        assert not out.exists()

    def test_dim_mismatch_aborts_before_write(self, tmp_path):
        class SplitBackend(OfflineBackend):
            def point_features(self, mesh, points, cfg):
                feats = super().point_features(mesh, points, cfg)
                # second mesh (wedge) loses a column: dims disagree
                return feats if len(mesh.faces) == 12 else feats[:, :-1]

        out = tmp_path / "bundle.json"
        with pytest.raises(BundleFormatError, match="disagree on dims"):
            export_bundle(self.make_scene(tmp_path), CFG, out, backend=SplitBackend())
        assert not out.exists()

    def test_nonfinite_features_fail_schema_check(self, tmp_path):
        class NanBackend(OfflineBackend):
            def point_features(self, mesh, points, cfg):
                feats = super().point_features(mesh, points, cfg)
                feats[0, 0] = np.nan
                return feats

        out = tmp_path / "bundle.json"
        with pytest.raises(BundleFormatError, match="non-finite"):
            export_bundle(self.make_scene(tmp_path), CFG, out, backend=NanBackend())
        assert not out.exists()


class TestCheckBundle:
    def good_doc(self):
        return {
            "scene_id": "s",
            "feature_dim": 2,
            "embedding_dim": 2,
            "objects": [
                {
                    "id": "a",
                    "label": None,
                    "centroid": [0.5, 0.0, 0.0],
                    "points": [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
                    "point_features": [[1.0, 0.0], [0.0, 1.0]],
                    "embedding": [1.0, 0.0],
                }
            ],
        }

    def test_good_doc_passes(self):
        check_bundle(self.good_doc())

    @pytest.mark.parametrize(
        "mutate,msg",
        [
            (lambda d: d.pop("feature_dim"), "feature_dim"),
            (lambda d: d.update(objects=[]), "no objects"),
            (lambda d: d["objects"][0].update(point_features=[[1.0, 0.0]]), "shape"),
            (lambda d: d["objects"][0].update(embedding=[1.0]), "embedding length"),
            (lambda d: d["objects"][0].update(embedding=[0.0, 0.0]), "zero-norm"),
            (lambda d: d["objects"][0].update(centroid=[9.0, 0.0, 0.0]), "not the point mean"),
            (lambda d: d["objects"][0]["points"].__setitem__(0, [0.0, 0.0, None]), "non-finite|points"),
        ],
    )
    def test_violations_raise(self, mutate, msg):
        doc = self.good_doc()
        mutate(doc)
        with pytest.raises((BundleFormatError, TypeError, ValueError)):
            check_bundle(doc)


class TestCli:
    def test_end_to_end(self, tmp_path, capsys):
        write_box_obj(tmp_path / "box.obj")
        man = write_manifest(tmp_path / "scene.json", [{"id": "a", "mesh": "box.obj"}])
        out = tmp_path / "bundle.json"
        rc = main(
            ["--scene", str(man), "--out", str(out), "--views", "4",
             "--feature-dim", "12", "--embedding-dim", "16", "--spacing", "0.06"]
        )
        assert rc == 0
        assert "1 objects" in capsys.readouterr().out
        doc = json.loads(out.read_text())
        assert doc["feature_dim"] == 12

    def test_missing_manifest_exits_2(self, tmp_path, capsys):
        rc = main(["--scene", str(tmp_path / "none.json"), "--out", str(tmp_path / "o.json")])
        assert rc == 2
        assert "scene-extract:" in capsys.readouterr().err

    def test_bad_config_exits_2(self, tmp_path, capsys):
        write_box_obj(tmp_path / "box.obj")
        man = write_manifest(tmp_path / "scene.json", [{"mesh": "box.obj"}])
        rc = main(["--scene", str(man), "--out", str(tmp_path / "o.json"),
                   "--spacing", "0"])
        assert rc == 2
        assert "spacing" in capsys.readouterr().err

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
