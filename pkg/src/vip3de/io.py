"""Text and binary file formats for scenes, cameras, trajectories, depths, latents and configs."""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .correspondence import CorrespondenceMap, format_correspondence
from .scene import Camera, PointScene
from .trajectory import CameraPath


class FormatError(ValueError):
    pass


def _g(x: float) -> str:
    return f"{x:.9g}"


# ---------------------------------------------------------------------------
# scenes

def write_scene(path, scene: PointScene) -> None:
    lines = [f"pointscene v1 {len(scene)}"]
    for p, c, r in zip(scene.positions, scene.colors, scene.radii):
        lines.append(" ".join(_g(v) for v in (*p, *c, r)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_scene(path) -> PointScene:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty scene file")
    head = lines[0].split()
    if len(head) != 3 or head[:2] != ["pointscene", "v1"]:
        raise FormatError(f"{path}: bad header {lines[0]!r}")
    count = int(head[2])
    if len(lines) - 1 != count:
        raise FormatError(f"{path}: header says {count} points, found {len(lines) - 1}")
    if count == 0:
        return PointScene.empty()
    data = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
    if data.shape[1] != 7:
        raise FormatError(f"{path}: expected 7 values per point")
    return PointScene(data[:, :3], data[:, 3:6], data[:, 6])


# ---------------------------------------------------------------------------
# cameras and trajectories

def camera_line(cam: Camera) -> str:
    K = cam.K
    vals = [K[0, 0], K[1, 1], K[0, 2], K[1, 2]]
    return " ".join([*(_g(v) for v in vals), str(cam.width), str(cam.height),
                     *(repr(float(v)) for v in cam.R.ravel()), *(repr(float(v)) for v in cam.t)])


def parse_camera(line: str) -> Camera:
    v = line.split()
    if len(v) != 18:
        raise FormatError(f"camera line needs 18 values, got {len(v)}")
    fx, fy, cx, cy = (float(a) for a in v[:4])
    w, h = int(v[4]), int(v[5])
    R = np.array([float(a) for a in v[6:15]]).reshape(3, 3)
    t = np.array([float(a) for a in v[15:18]])
    return Camera.from_intrinsics(fx, fy, cx, cy, R, t, w, h)


def write_cameras(path, cameras: Sequence[Camera]) -> None:
    Path(path).write_text("".join(camera_line(c) + "\n" for c in cameras))


def write_trajectory(path, traj: CameraPath) -> None:
    keys = ",".join(str(i) for i in traj.key_indices)
    body = "".join(camera_line(c) + "\n" for c in traj.cameras)
    Path(path).write_text(f"trajectory v1 {len(traj)} keys:{keys}\n" + body)


def read_cameras(path) -> CameraPath | list[Camera]:
    """Read a camera file or a trajectory file (recognized by its header)."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if lines and lines[0].startswith("trajectory"):
        head = lines[0].split()
        if len(head) != 4 or head[1] != "v1" or not head[3].startswith("keys:"):
            raise FormatError(f"{path}: bad trajectory header {lines[0]!r}")
        cams = [parse_camera(ln) for ln in lines[1:]]
        if len(cams) != int(head[2]):
            raise FormatError(f"{path}: header says {head[2]} cameras, found {len(cams)}")
        keys = [int(k) for k in head[3][5:].split(",") if k]
        return CameraPath(cams, keys)
    return [parse_camera(ln) for ln in lines]


# ---------------------------------------------------------------------------
# images and depths

def write_png(path, rgb: np.ndarray) -> None:
    from PIL import Image

    img = np.clip(np.rint(np.asarray(rgb) * 255), 0, 255).astype(np.uint8)
    Image.fromarray(img).save(path)


def read_png(path) -> np.ndarray:
    from PIL import Image

    return np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0


def write_depth(path, depth: np.ndarray) -> None:
    """Little-endian float32, row-major; empty pixels keep the +inf bit pattern."""
    Path(path).write_bytes(np.asarray(depth, dtype="<f4").tobytes())


def read_depth(path, height: int, width: int) -> np.ndarray:
    data = np.frombuffer(Path(path).read_bytes(), dtype="<f4")
    if data.size != height * width:
        raise FormatError(f"{path}: expected {height * width} floats, found {data.size}")
    return data.reshape(height, width).astype(np.float64)


# ---------------------------------------------------------------------------
# latents

LATENT_MAGIC = b"LATV"


def write_latent(path, latent: np.ndarray) -> None:
    x = np.asarray(latent)
    if x.ndim != 4:
        raise FormatError("latent must be 4-D (N, C, h, w)")
    header = LATENT_MAGIC + struct.pack("<4I", *x.shape)
    Path(path).write_bytes(header + x.astype("<f4").tobytes())


def read_latent(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != LATENT_MAGIC or len(raw) < 20:
        raise FormatError(f"{path}: not a latent dump")
    shape = struct.unpack("<4I", raw[4:20])
    data = np.frombuffer(raw[20:], dtype="<f4")
    if data.size != int(np.prod(shape)):
        raise FormatError(f"{path}: payload does not match shape {shape}")
    return data.reshape(shape).astype(np.float64)


def write_correspondence(path, cmap: CorrespondenceMap) -> None:
    Path(path).write_text(format_correspondence(cmap))


# ---------------------------------------------------------------------------
# config

def parse_config_text(text: str, allowed: Sequence[str]) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment. Unknown keys raise."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {n}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in allowed:
            raise FormatError(f"line {n}: unknown key {key!r}")
        out[key] = value
    return out


def read_config(path, allowed: Sequence[str]) -> dict[str, str]:
    return parse_config_text(Path(path).read_text(), allowed)
