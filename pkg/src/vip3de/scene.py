"""Point-splat scenes: cameras, z-buffer rendering and color updating from edited views."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

BACKGROUND = (0.5, 0.5, 0.5)
MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class Camera:
    """Pinhole camera with world->camera extrinsics ``x_cam = R @ x_world + t``."""

    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        K = np.asarray(self.K, dtype=np.float64).reshape(3, 3)
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        if K[0, 0] <= 0 or K[1, 1] <= 0 or K[2, 2] != 1.0 or np.any(K[[1, 2, 2], [0, 0, 1]] != 0):
            raise ValueError(f"invalid intrinsics {K.tolist()}")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-9 or np.linalg.det(R) <= 0:
            raise ValueError("rotation must be orthonormal with det +1")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    @classmethod
    def from_intrinsics(cls, fx, fy, cx, cy, R, t, width, height) -> "Camera":
        K = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
        return cls(K, R, t, width, height)

    @classmethod
    def look_at(cls, eye, target, up, fx, width, height, fy=None) -> "Camera":
        """Camera at ``eye`` looking at ``target``; image y axis points along -up."""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        R = np.stack([right, down, forward])
        fy = fx if fy is None else fy
        return cls.from_intrinsics(fx, fy, (width - 1) / 2, (height - 1) / 2, R, -R @ eye, width, height)

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.t

    @property
    def axis(self) -> np.ndarray:
        """Optical axis in world coordinates."""
        return self.R[2].copy()

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def same_intrinsics(self, other: "Camera") -> bool:
        return (self.width, self.height) == (other.width, other.height) and np.allclose(self.K, other.K)

    def with_pose(self, R, t) -> "Camera":
        return Camera(self.K, R, t, self.width, self.height)


@dataclass
class PointScene:
    """Colored discs standing in for 3D Gaussians.

    ``radii`` are in pixels at unit depth, so a point at depth ``z`` paints a
    disc of radius ``radius * fx / z`` pixels.
    """

    positions: np.ndarray
    colors: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        self.radii = np.asarray(self.radii, dtype=np.float64).reshape(-1)
        n = len(self.positions)
        if len(self.colors) != n or len(self.radii) != n:
            raise ValueError("positions, colors and radii must have equal length")
        if np.any(self.colors < 0) or np.any(self.colors > 1):
            raise ValueError("colors must lie in [0, 1]")
        if np.any(self.radii <= 0):
            raise ValueError("radii must be positive")

    def __len__(self):
        return len(self.positions)

    @classmethod
    def empty(cls) -> "PointScene":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0))

    def with_colors(self, colors) -> "PointScene":
        return replace(self, colors=np.asarray(colors, dtype=np.float64).copy())

    def copy(self) -> "PointScene":
        return PointScene(self.positions.copy(), self.colors.copy(), self.radii.copy())


@dataclass
class RenderedFrame:
    rgb: np.ndarray  # (H, W, 3) in [0, 1]
    depth: np.ndarray  # (H, W), +inf where empty
    index: np.ndarray = field(repr=False, default=None)  # (H, W) winning point, -1 where empty

    @property
    def covered(self) -> np.ndarray:
        return np.isfinite(self.depth)


def _fragments(scene: PointScene, camera: Camera):
    """All (pixel, depth, point) fragments produced by splatting ``scene``."""
    H, W = camera.height, camera.width
    cam = scene.positions @ camera.R.T + camera.t
    z = cam[:, 2]
    keep = np.nonzero(z > MIN_DEPTH)[0]
    if len(keep) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, np.zeros(0), empty
    proj = cam[keep] @ camera.K.T
    u = proj[:, 0] / proj[:, 2]
    v = proj[:, 1] / proj[:, 2]
    r = scene.radii[keep] * camera.K[0, 0] / z[keep]
    # the disc never needs to extend beyond the image diagonal
    reach = np.minimum(np.ceil(r), H + W).astype(np.int64)
    finite = np.isfinite(u) & np.isfinite(v) & (np.abs(u) < 1e7) & (np.abs(v) < 1e7)
    pix, depth, owner = [], [], []
    for R in np.unique(reach[finite]):
        sel = np.nonzero(finite & (reach == R))[0]
        d = np.arange(-R, R + 1)
        dx, dy = (a.ravel() for a in np.meshgrid(d, d))
        cu = np.rint(u[sel]).astype(np.int64)[:, None]
        cv = np.rint(v[sel]).astype(np.int64)[:, None]
        px, py = cu + dx, cv + dy
        inside = (px - u[sel, None]) ** 2 + (py - v[sel, None]) ** 2 <= r[sel, None] ** 2
        inside |= (dx == 0) & (dy == 0)
        inside &= (px >= 0) & (px < W) & (py >= 0) & (py < H)
        rows, _ = np.nonzero(inside)
        pix.append(py[inside] * W + px[inside])
        depth.append(z[keep[sel]][rows])
        owner.append(keep[sel][rows])
    if not pix:
        empty = np.zeros(0, dtype=np.int64)
        return empty, np.zeros(0), empty
    return np.concatenate(pix), np.concatenate(depth), np.concatenate(owner)


def rasterize(scene: PointScene, camera: Camera) -> tuple[np.ndarray, np.ndarray]:
    """Z-buffer visibility: per-pixel winning point index (-1 if none) and depth (+inf if none).

    Ties in depth go to the lower point index.
    """
    H, W = camera.height, camera.width
    index = np.full(H * W, -1, dtype=np.int64)
    depth = np.full(H * W, np.inf)
    pix, z, owner = _fragments(scene, camera)
    if len(pix):
        order = np.lexsort((owner, z, pix))
        first = np.unique(pix[order], return_index=True)[1]
        win = order[first]
        index[pix[win]] = owner[win]
        depth[pix[win]] = z[win]
    return index.reshape(H, W), depth.reshape(H, W)


def render(scene: PointScene, camera: Camera, background=BACKGROUND) -> RenderedFrame:
    index, depth = rasterize(scene, camera)
    rgb = np.empty((camera.height, camera.width, 3))
    rgb[:] = np.asarray(background, dtype=np.float64)
    hit = index >= 0
    rgb[hit] = scene.colors[index[hit]]
    return RenderedFrame(rgb, depth, index)


def render_all(scene: PointScene, cameras: Sequence[Camera], background=BACKGROUND) -> list[RenderedFrame]:
    return [render(scene, cam, background) for cam in cameras]


@dataclass
class View:
    """A supervision view for ``update_scene``; ``mask`` is 1 where updating is allowed."""

    camera: Camera
    target: np.ndarray
    mask: np.ndarray | None = None


def _as_view(v) -> View:
    if isinstance(v, View):
        return v
    return View(*v)


class _Supervision:
    """Flattened (point, target, weight) triples for all covered, unmasked pixels."""

    def __init__(self, scene: PointScene, views: Sequence[View], background):
        self.n = len(scene)
        idx, tgt, wts = [], [], []
        self.const = 0.0
        self.norm = []
        bg = np.asarray(background, dtype=np.float64)
        for view in views:
            H, W = view.camera.height, view.camera.width
            target = np.asarray(view.target, dtype=np.float64)
            if target.shape != (H, W, 3):
                raise ValueError(f"target shape {target.shape} does not match camera {(H, W, 3)}")
            mask = np.ones((H, W)) if view.mask is None else np.asarray(view.mask, dtype=np.float64)
            if mask.shape != (H, W):
                raise ValueError("mask shape does not match camera")
            index, _ = rasterize(scene, view.camera)
            hit = (index >= 0) & (mask > 0)
            idx.append(index[hit])
            tgt.append(target[hit])
            wts.append(mask[hit])
            miss = index < 0
            # background pixels contribute a color-independent constant to the loss
            self.const += (mask[miss, None] * np.abs(bg - target[miss])).sum() / (H * W * 3)
            self.norm.append(np.full(hit.sum(), 1.0 / (H * W * 3)))
        self.idx = np.concatenate(idx)
        self.tgt = np.concatenate(tgt) if tgt else np.zeros((0, 3))
        self.wts = np.concatenate(wts)
        self.loss_w = np.concatenate(self.norm) * self.wts
        self.coverage = np.bincount(self.idx, self.wts, minlength=self.n)
        self.views = len(views)

    def loss(self, colors: np.ndarray) -> float:
        err = np.abs(colors[self.idx] - self.tgt).sum(axis=1)
        return float((self.loss_w @ err + self.const) / self.views)

    def step_direction(self, colors: np.ndarray) -> np.ndarray:
        """Per-point L1 subgradient normalized by each point's supervised coverage."""
        s = np.sign(colors[self.idx] - self.tgt) * self.wts[:, None]
        g = np.stack([np.bincount(self.idx, s[:, c], minlength=self.n) for c in range(3)], axis=1)
        out = np.zeros_like(g)
        seen = self.coverage > 0
        out[seen] = g[seen] / self.coverage[seen, None]
        return out


def scene_l1_loss(scene: PointScene, views, background=BACKGROUND) -> float:
    """Masked per-pixel L1 between renders and targets, averaged over views."""
    views = [_as_view(v) for v in views]
    if not views:
        raise ValueError("no supervision")
    return _Supervision(scene, views, background).loss(scene.colors)


def update_scene(
    scene: PointScene,
    views,
    iters: int = 750,
    lr: float = 0.05,
    final_lr_ratio: float = 0.01,
    background=BACKGROUND,
    loss_history: list | None = None,
) -> PointScene:
    """Fit point colors to edited views by descent on the masked L1 rendering loss.

    Geometry is frozen, so visibility is computed once. Each step moves a point's
    color by the coverage-weighted mean sign of its residuals, which makes the
    step size independent of how many pixels a point covers; the step decays
    geometrically from ``lr`` to ``lr * final_lr_ratio``. Colors are projected
    back onto [0, 1] after every step.
    """
    views = [_as_view(v) for v in views]
    if not views:
        raise ValueError("no supervision")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if lr <= 0:
        raise ValueError("lr must be positive")
    sup = _Supervision(scene, views, background)
    colors = scene.colors.copy()
    steps = lr * final_lr_ratio ** (np.arange(iters) / max(iters - 1, 1))
    if loss_history is not None:
        loss_history.append(sup.loss(colors))
    for step in steps:
        colors = np.clip(colors - step * sup.step_direction(colors), 0.0, 1.0)
        if loss_history is not None:
            loss_history.append(sup.loss(colors))
    return scene.with_colors(colors)
