"""Continuous camera paths: view-change sorting, key selection, Slerp/lerp interpolation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .scene import Camera


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix -> unit quaternion (w, x, y, z) with w >= 0."""
    x, y, z, w = Rotation.from_matrix(R).as_quat()
    q = np.array([w, x, y, z])
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    R = Rotation.from_quat([x, y, z, w]).as_matrix()
    # re-orthonormalize so the Camera invariant holds at 1e-9
    U, _, Vt = np.linalg.svd(R)
    return U @ Vt


def slerp(qa, qb, k: float) -> np.ndarray:
    """Shortest-arc spherical interpolation with q(0) = qa and q(1) = qb."""
    qa = np.asarray(qa, dtype=np.float64)
    qb = np.asarray(qb, dtype=np.float64)
    for q in (qa, qb):
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError(f"quaternion {q} is not unit length")
    dot = float(qa @ qb)
    if dot < 0:
        qb, dot = -qb, -dot
    theta = np.arccos(min(dot, 1.0))
    if theta < 1e-6:
        q = (1 - k) * qa + k * qb
    else:
        q = (np.sin((1 - k) * theta) * qa + np.sin(k * theta) * qb) / np.sin(theta)
    return q / np.linalg.norm(q)


def view_change_distance(a: Camera, b: Camera, scene_radius: float) -> float:
    """Angle between optical axes (radians) plus center distance in scene radii."""
    if scene_radius <= 0:
        raise ValueError("scene_radius must be positive")
    ax, bx = a.axis, b.axis
    angle = np.arctan2(np.linalg.norm(np.cross(ax, bx)), float(ax @ bx))
    return float(angle + np.linalg.norm(a.center - b.center) / scene_radius)


def distance_matrix(cameras: Sequence[Camera], scene_radius: float) -> np.ndarray:
    n = len(cameras)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = view_change_distance(cameras[i], cameras[j], scene_radius)
    return D


def sort_order(cameras: Sequence[Camera], scene_radius: float) -> list[int]:
    """Greedy nearest-neighbour chain starting from the most peripheral camera.

    The most peripheral camera is the one with the largest mean view-change
    distance to all others. Ties go to the lowest index.
    """
    n = len(cameras)
    if n < 2:
        raise ValueError("need at least 2 cameras to sort")
    D = distance_matrix(cameras, scene_radius)
    current = int(np.argmax(D.sum(axis=1)))
    order = [current]
    unvisited = set(range(n)) - {current}
    while unvisited:
        rest = sorted(unvisited)
        current = rest[int(np.argmin(D[current, rest]))]
        order.append(current)
        unvisited.remove(current)
    return order


def sort_cameras(cameras: Sequence[Camera], scene_radius: float) -> list[Camera]:
    return [cameras[i] for i in sort_order(cameras, scene_radius)]


def chain_cost(cameras: Sequence[Camera], scene_radius: float) -> float:
    return sum(view_change_distance(a, b, scene_radius) for a, b in zip(cameras[:-1], cameras[1:]))


def interpolate_cameras(A: Camera, B: Camera, count: int) -> list[Camera]:
    """``count`` cameras strictly between A and B at k = i/(count+1)."""
    if not A.same_intrinsics(B):
        raise ValueError("cameras must share intrinsics and image size")
    if count < 0:
        raise ValueError("count must be >= 0")
    qa, qb = matrix_to_quat(A.R), matrix_to_quat(B.R)
    out = []
    for i in range(1, count + 1):
        k = i / (count + 1)
        R = quat_to_matrix(slerp(qa, qb, k))
        t = (1 - k) * A.t + k * B.t
        out.append(A.with_pose(R, t))
    return out


@dataclass
class CameraPath:
    cameras: list[Camera]
    key_indices: list[int]

    def __post_init__(self):
        n = len(self.cameras)
        keys = list(self.key_indices)
        if n < 2:
            raise ValueError("trajectory too short")
        if keys[0] != 0 or keys[-1] != n - 1 or any(b <= a for a, b in zip(keys[:-1], keys[1:])):
            raise ValueError(f"invalid key indices {keys} for {n} cameras")

    def __len__(self):
        return len(self.cameras)

    def __iter__(self):
        return iter(self.cameras)

    def __getitem__(self, i):
        return self.cameras[i]

    def step_distances(self, scene_radius: float) -> np.ndarray:
        return np.array([view_change_distance(a, b, scene_radius)
                         for a, b in zip(self.cameras[:-1], self.cameras[1:])])

    def is_smooth(self, bound: float, scene_radius: float) -> bool:
        return bool(np.all(self.step_distances(scene_radius) < bound))


def _allocate(total: int, weights: np.ndarray) -> np.ndarray:
    """Split ``total`` into integers proportional to ``weights`` (largest remainder)."""
    if total == 0:
        return np.zeros(len(weights), dtype=int)
    w = np.asarray(weights, dtype=np.float64)
    w = np.ones_like(w) if w.sum() <= 0 else w
    exact = total * w / w.sum()
    counts = np.floor(exact).astype(int)
    rem = total - counts.sum()
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[:rem]] += 1
    return counts


def build_trajectory(
    training_cams: Sequence[Camera],
    key_count: int,
    frames_total: int,
    scene_radius: float,
    seed: int | None = None,
) -> CameraPath:
    """Sort training views, pick key cameras and fill segments with interpolated views.

    Keys are evenly spaced along the sorted order; with a ``seed`` they are
    instead drawn at random (sorted, first and last forced). Interpolated
    cameras are allotted to segments in proportion to segment view change.
    """
    if key_count < 2:
        raise ValueError("key_count must be >= 2")
    if frames_total < key_count:
        raise ValueError(f"frames_total ({frames_total}) < key_count ({key_count})")
    if len(training_cams) < key_count:
        raise ValueError("fewer training cameras than key cameras")
    ordered = sort_cameras(training_cams, scene_radius)
    n = len(ordered)
    if seed is None:
        picks = np.round(np.linspace(0, n - 1, key_count)).astype(int)
    else:
        rng = np.random.default_rng(seed)
        inner = rng.choice(np.arange(1, n - 1), size=key_count - 2, replace=False)
        picks = np.sort(np.concatenate([[0, n - 1], inner])).astype(int)
    keys = [ordered[i] for i in picks]
    seg = np.array([view_change_distance(a, b, scene_radius) for a, b in zip(keys[:-1], keys[1:])])
    counts = _allocate(frames_total - key_count, seg)
    cameras, key_indices = [keys[0]], [0]
    for (a, b), c in zip(zip(keys[:-1], keys[1:]), counts):
        cameras.extend(interpolate_cameras(a, b, int(c)))
        cameras.append(b)
        key_indices.append(len(cameras) - 1)
    return CameraPath(cameras, key_indices)
