import numpy as np
import pytest

from scene_extract.mesh import MeshError, TriMesh, load_obj, sample_surface

from conftest import write_box_obj, write_wedge_obj


class TestLoadObj:
    def test_box_counts(self, box_path):
        mesh = load_obj(box_path)
        assert mesh.vertices.shape == (8, 3)
        # 6 quads fan-triangulate into 12 triangles
        assert mesh.faces.shape == (12, 3)

    def test_wedge_counts(self, wedge_path):
        mesh = load_obj(wedge_path)
        assert mesh.vertices.shape == (6, 3)
        assert mesh.faces.shape == (8, 3)

    def test_slash_index_forms(self, tmp_path):
        p = tmp_path / "m.obj"
        p.write_text(
            "v 0 0 0\nv 1 0 0\nv 0 1 0\n"
            "vt 0 0\nvn 0 0 1\n"
            "f 1/1/1 2/1/1 3/1/1\n"
        )
        mesh = load_obj(p)
        assert mesh.faces.tolist() == [[0, 1, 2]]

    def test_negative_indices(self, tmp_path):
        p = tmp_path / "m.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
        assert load_obj(p).faces.tolist() == [[0, 1, 2]]

    def test_comments_and_blank_lines_ignored(self, tmp_path):
        p = tmp_path / "m.obj"
        p.write_text("# header\n\nv 0 0 0\nv 1 0 0\nv 0 1 0\ns off\nf 1 2 3\n")
        assert load_obj(p).faces.shape == (1, 3)

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(MeshError, match="nosuch.obj"):
            load_obj(tmp_path / "nosuch.obj")

    def test_no_vertices_rejected(self, tmp_path):
        p = tmp_path / "m.obj"
        p.write_text("# empty\n")
        with pytest.raises(MeshError, match="no vertices"):
            load_obj(p)

    def test_short_face_rejected(self, tmp_path):
        p = tmp_path / "m.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nf 1 2\n")
        with pytest.raises(MeshError, match="face needs"):
            load_obj(p)

    def test_out_of_range_face_rejected(self, tmp_path):
        p = tmp_path / "m.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
        with pytest.raises(MeshError, match="out of range"):
            load_obj(p)


class TestTriMesh:
    def test_validation_rejects_nan(self):
        with pytest.raises(MeshError, match="non-finite"):
            TriMesh(np.array([[0.0, 0.0, np.nan]]), np.zeros((0, 3), dtype=np.int64))

    def test_box_area_and_centroid(self, box_path):
        mesh = load_obj(box_path)
        assert mesh.surface_area() == pytest.approx(6 * 0.3 * 0.3, abs=1e-12)
        assert np.abs(mesh.surface_centroid()).max() <= 1e-12

    def test_signature_is_content_based(self, tmp_path):
        a = load_obj(write_box_obj(tmp_path / "a.obj"))
        b = load_obj(write_box_obj(tmp_path / "b.obj"))
        c = load_obj(write_wedge_obj(tmp_path / "c.obj"))
        assert a.signature() == b.signature()
        assert a.signature() != c.signature()


class TestSampleSurface:
    def test_count_matches_area_budget(self, box_path):
        mesh = load_obj(box_path)
        pts = sample_surface(mesh, spacing=0.05, seed=0)
        assert len(pts) == round(mesh.surface_area() / 0.05**2)

    def test_deterministic_per_seed(self, box_path):
        mesh = load_obj(box_path)
        a = sample_surface(mesh, 0.05, seed=3)
        b = sample_surface(mesh, 0.05, seed=3)
        c = sample_surface(mesh, 0.05, seed=4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_samples_lie_on_box_surface(self, box_path):
        mesh = load_obj(box_path)
        pts = sample_surface(mesh, 0.05, seed=1)
        half = 0.15
        assert (np.abs(pts) <= half + 1e-9).all()
        on_face = (np.abs(np.abs(pts) - half) <= 1e-9).any(axis=1)
        assert on_face.all()

    def test_faceless_mesh_rejected(self):
        mesh = TriMesh(np.array([[0.0, 0.0, 0.0]]), np.zeros((0, 3), dtype=np.int64))
        with pytest.raises(MeshError, match="no surface area"):
            sample_surface(mesh, 0.05, seed=0)

    def test_bad_spacing_rejected(self, box_path):
        with pytest.raises(MeshError, match="spacing"):
            sample_surface(load_obj(box_path), 0.0, seed=0)
