import json

import pytest


def write_box_obj(path, extents=(0.3, 0.3, 0.3)):
    """Axis-aligned box centered at the origin; quad faces exercise the
    fan triangulation path."""
    ex, ey, ez = (e / 2.0 for e in extents)
    verts = [
        (-ex, -ey, -ez), (ex, -ey, -ez), (ex, ey, -ez), (-ex, ey, -ez),
        (-ex, -ey, ez), (ex, -ey, ez), (ex, ey, ez), (-ex, ey, ez),
    ]
    quads = [
        (1, 2, 3, 4), (5, 6, 7, 8),
        (1, 2, 6, 5), (2, 3, 7, 6), (3, 4, 8, 7), (4, 1, 5, 8),
    ]
    lines = [f"v {x} {y} {z}" for x, y, z in verts]
    lines += [f"f {a} {b} {c} {d}" for a, b, c, d in quads]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_wedge_obj(path):
    """Triangular prism with triangle faces only."""
    verts = [
        (0.0, 0.0, 0.0), (0.4, 0.0, 0.0), (0.0, 0.3, 0.0),
        (0.0, 0.0, 0.25), (0.4, 0.0, 0.25), (0.0, 0.3, 0.25),
    ]
    tris = [
        (1, 3, 2), (4, 5, 6),
        (1, 2, 5), (1, 5, 4),
        (2, 3, 6), (2, 6, 5),
        (3, 1, 4), (3, 4, 6),
    ]
    lines = [f"v {x} {y} {z}" for x, y, z in verts]
    lines += [f"f {a} {b} {c}" for a, b, c in tris]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_manifest(path, objects, scene_id="toy"):
    path.write_text(json.dumps({"scene_id": scene_id, "objects": objects}))
    return path


@pytest.fixture
def box_path(tmp_path):
    return write_box_obj(tmp_path / "box.obj")


@pytest.fixture
def wedge_path(tmp_path):
    return write_wedge_obj(tmp_path / "wedge.obj")
