"""Built-in seeded demo: a smoothly textured cube of colored points and a camera arc."""
from __future__ import annotations

import numpy as np

from .scene import Camera, PointScene

DEMO_RECOLOR = {
    "matrix": [[1.0, 0.0, 0.0], [0.0, 0.8, 0.0], [0.0, 0.0, 0.6]],
    "offset": [0.1, 0.05, 0.0],
}


def textured_cube(per_side: int = 24, size: float = 2.0, seed: int = 0) -> PointScene:
    """Points on the six faces of an axis-aligned cube with a low-frequency color field."""
    rng = np.random.default_rng(seed)
    g = (np.arange(per_side) + 0.5) / per_side * size - size / 2
    a, b = (m.ravel() for m in np.meshgrid(g, g))
    half = np.full_like(a, size / 2)
    faces = []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            p = np.zeros((len(a), 3))
            p[:, axis] = sign * half
            p[:, (axis + 1) % 3] = a
            p[:, (axis + 2) % 3] = b
            faces.append(p)
    pos = np.concatenate(faces)
    phase = rng.uniform(0, 2 * np.pi, 3)
    freq = rng.uniform(0.8, 1.4, 3)
    colors = 0.5 + 0.3 * np.sin(pos @ np.diag(freq) + phase)
    spacing = size / per_side
    radii = np.full(len(pos), 0.85 * spacing)
    return PointScene(pos, colors, radii)


def arc_cameras(count: int = 25, radius: float = 6.0, elevation_deg: float = 20.0,
                sweep_deg: float = 90.0, start_deg: float = 20.0, size: int = 128,
                focal: float = 160.0) -> list[Camera]:
    """Cameras on a horizontal arc looking at the origin (world y is up)."""
    el = np.deg2rad(elevation_deg)
    cams = []
    for az in np.deg2rad(np.linspace(start_deg, start_deg + sweep_deg, count)):
        eye = radius * np.array([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)])
        cams.append(Camera.look_at(eye, np.zeros(3), [0.0, 1.0, 0.0], focal, size, size))
    return cams


def demo_inputs(frames: int = 25, seed: int = 0, size: int = 128):
    """Scene, shuffled training cameras and the scene radius used for trajectory building."""
    scene = textured_cube(seed=seed)
    train = arc_cameras(12, size=size)
    order = np.random.default_rng(seed).permutation(len(train))
    return scene, [train[i] for i in order], 6.0
