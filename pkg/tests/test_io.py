import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vip3de import io
from vip3de.correspondence import CorrespondenceMap
from vip3de.demo import arc_cameras, textured_cube
from vip3de.trajectory import CameraPath, build_trajectory


def test_scene_round_trip(tmp_path):
    scene = textured_cube(per_side=4)
    io.write_scene(tmp_path / "s.txt", scene)
    back = io.read_scene(tmp_path / "s.txt")
    assert (tmp_path / "s.txt").read_text().splitlines()[0] == f"pointscene v1 {len(scene)}"
    np.testing.assert_allclose(back.positions, scene.positions, rtol=1e-8)
    np.testing.assert_allclose(back.colors, scene.colors, rtol=1e-8)
    np.testing.assert_allclose(back.radii, scene.radii, rtol=1e-8)
    io.write_scene(tmp_path / "e.txt", type(scene).empty())
    assert len(io.read_scene(tmp_path / "e.txt")) == 0


@pytest.mark.parametrize("text", ["", "pointcloud v1 1\n0 0 0 1 1 1 1\n", "pointscene v1 2\n0 0 0 1 1 1 1\n"])
def test_bad_scene_files(tmp_path, text):
    (tmp_path / "bad.txt").write_text(text)
    with pytest.raises(io.FormatError):
        io.read_scene(tmp_path / "bad.txt")


def test_cameras_and_trajectory_round_trip(tmp_path):
    cams = arc_cameras(5, size=32, focal=40.0)
    io.write_cameras(tmp_path / "c.txt", cams)
    back = io.read_cameras(tmp_path / "c.txt")
    assert isinstance(back, list) and len(back) == 5
    for a, b in zip(cams, back):
        np.testing.assert_array_equal(a.R, b.R)
        np.testing.assert_array_equal(a.t, b.t)
        assert a.same_intrinsics(b)
    assert len((tmp_path / "c.txt").read_text().splitlines()[0].split()) == 18

    path = build_trajectory(cams, 3, 9, 6.0)
    io.write_trajectory(tmp_path / "t.txt", path)
    head = (tmp_path / "t.txt").read_text().splitlines()[0]
    assert head == f"trajectory v1 9 keys:{','.join(map(str, path.key_indices))}"
    tp = io.read_cameras(tmp_path / "t.txt")
    assert isinstance(tp, CameraPath) and tp.key_indices == path.key_indices
    np.testing.assert_array_equal(tp[4].R, path[4].R)


def test_png_round_trip(tmp_path):
    img = np.random.default_rng(0).uniform(0, 1, (9, 7, 3))
    io.write_png(tmp_path / "a.png", img)
    assert np.abs(io.read_png(tmp_path / "a.png") - img).max() <= 0.5 / 255 + 1e-12


def test_depth_binary_layout(tmp_path):
    d = np.array([[1.5, np.inf], [2.25, 3.0]])
    io.write_depth(tmp_path / "d.bin", d)
    raw = (tmp_path / "d.bin").read_bytes()
    assert raw == struct.pack("<4f", 1.5, float("inf"), 2.25, 3.0)
    np.testing.assert_array_equal(io.read_depth(tmp_path / "d.bin", 2, 2), d)
    with pytest.raises(io.FormatError):
        io.read_depth(tmp_path / "d.bin", 3, 2)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 5), st.integers(1, 5), st.integers(0, 1000))
def test_latent_round_trip(n, c, h, w, seed):
    import tempfile
    from pathlib import Path

    x = np.random.default_rng(seed).normal(size=(n, c, h, w)).astype(np.float32).astype(np.float64)
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "x.latv"
        io.write_latent(p, x)
        raw = p.read_bytes()
        assert raw[:4] == b"LATV" and struct.unpack("<4I", raw[4:20]) == (n, c, h, w)
        assert len(raw) == 20 + 4 * x.size
        np.testing.assert_array_equal(io.read_latent(p), x)


def test_latent_errors(tmp_path):
    (tmp_path / "x").write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(io.FormatError):
        io.read_latent(tmp_path / "x")
    with pytest.raises(io.FormatError):
        io.write_latent(tmp_path / "y", np.zeros((2, 2)))


def test_correspondence_dump(tmp_path):
    cm = CorrespondenceMap.identity(2, 2, 2)
    io.write_correspondence(tmp_path / "m.txt", cm)
    assert "0,0->0,0" in (tmp_path / "m.txt").read_text()


def test_config_parsing():
    text = "# defaults\neta = 0.3   # lower\n\ntau=0.25\n"
    assert io.parse_config_text(text, ["eta", "tau"]) == {"eta": "0.3", "tau": "0.25"}
    with pytest.raises(io.FormatError, match="unknown key"):
        io.parse_config_text("gamma = 1\n", ["eta"])
    with pytest.raises(io.FormatError):
        io.parse_config_text("eta 0.3\n", ["eta"])
