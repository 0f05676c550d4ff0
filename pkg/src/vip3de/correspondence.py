"""Depth-based cross-view correspondence to the anchor frame and latent overriding."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scene import Camera

EMPTY = -1


class NoSurfaceError(ValueError):
    pass


@dataclass
class CorrespondenceMap:
    """Per-frame latent-cell links into the anchor frame.

    ``target[i, b, a] = (col, row)`` of the anchor-frame latent cell that frame
    ``i``'s cell at row ``b``, column ``a`` maps to, or (-1, -1) for no mapping.
    The anchor frame never maps to itself.
    """

    target: np.ndarray  # (N, h, w, 2) int
    image_shape: tuple[int, int]
    factor: int
    anchor: int = 0

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=np.int64)
        N, h, w, _ = self.target.shape
        valid = self.valid
        if np.any(valid[self.anchor]):
            raise ValueError("anchor frame must not be mapped")
        cols, rows = self.target[..., 0][valid], self.target[..., 1][valid]
        if np.any((cols < 0) | (cols >= w) | (rows < 0) | (rows >= h)):
            raise ValueError("mapped cell outside anchor latent bounds")

    @property
    def valid(self) -> np.ndarray:
        return self.target[..., 0] >= 0

    @property
    def frame_count(self) -> int:
        return self.target.shape[0]

    @property
    def latent_shape(self) -> tuple[int, int]:
        return self.target.shape[1], self.target.shape[2]

    def check_latent(self, shape) -> None:
        if len(shape) != 4 or shape[0] != self.frame_count or tuple(shape[2:]) != self.latent_shape:
            raise ValueError(f"latent shape {tuple(shape)} does not match correspondence "
                             f"({self.frame_count} frames, latent {self.latent_shape})")

    def coverage(self) -> float:
        """Fraction of non-anchor cells with a mapping."""
        n = self.frame_count - 1
        return float(self.valid.sum() / (n * np.prod(self.latent_shape))) if n else 0.0

    @classmethod
    def identity(cls, frames: int, h: int, w: int, factor: int = 1, anchor: int = 0):
        b, a = np.mgrid[0:h, 0:w]
        target = np.broadcast_to(np.stack([a, b], axis=-1), (frames, h, w, 2)).copy()
        target[anchor] = EMPTY
        return cls(target, (h * factor, w * factor), factor, anchor)

    @classmethod
    def empty(cls, frames: int, h: int, w: int, factor: int = 1, anchor: int = 0):
        return cls(np.full((frames, h, w, 2), EMPTY), (h * factor, w * factor), factor, anchor)


def project_points(cam_i: Camera, cam_1: Camera, u, v, depth):
    """Vectorized pixel-depth transfer from view i to view 1.

    Returns (u1, v1, depth1) as float arrays; no bounds checks.
    """
    u, v, depth = (np.asarray(a, dtype=np.float64) for a in (u, v, depth))
    pix = np.stack([u, v, np.ones_like(u)], axis=-1)
    cam = (pix @ np.linalg.inv(cam_i.K).T) * depth[..., None]
    world = (cam - cam_i.t) @ cam_i.R  # R^T (x - t)
    cam1 = world @ cam_1.R.T + cam_1.t
    proj = cam1 @ cam_1.K.T
    z = cam1[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        return proj[..., 0] / proj[..., 2], proj[..., 1] / proj[..., 2], z


def in_frustum(u1, v1, z1, camera: Camera) -> np.ndarray:
    """True where the projection lands on a pixel of ``camera`` in front of it."""
    pu, pv = np.rint(u1), np.rint(v1)
    return (z1 > 0) & (pu >= 0) & (pu < camera.width) & (pv >= 0) & (pv < camera.height)


def project_pixel(cam_i: Camera, cam_1: Camera, u: float, v: float, depth: float):
    """Transfer pixel (u, v) with depth from view i to view 1.

    Returns ``(u1, v1, depth1, visible)`` where ``visible`` is False when the
    point is behind view 1 or lands outside its image.
    """
    if not np.isfinite(depth) or depth <= 0:
        raise NoSurfaceError(f"no surface at pixel ({u}, {v})")
    u1, v1, z1 = project_points(cam_i, cam_1, u, v, depth)
    ok = bool(in_frustum(u1, v1, z1, cam_1))
    return float(u1), float(v1), float(z1), ok


def build_correspondence(depths: Sequence[np.ndarray], cameras: Sequence[Camera], tau: float = 0.5,
                         factor: int = 8, anchor: int = 0) -> CorrespondenceMap:
    """Map every latent cell of every frame to the anchor frame where geometry allows.

    Each cell is represented by one pixel (offset ``factor // 2`` inside the
    cell) and that pixel's depth. A projection is kept when it lands in the
    anchor image in front of the camera and its projected depth is within
    ``tau`` of the anchor's rendered depth at the nearest pixel.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    depths = [np.asarray(d, dtype=np.float64) for d in depths]
    if len(depths) != len(cameras):
        raise ValueError("need one depth map per camera")
    H, W = depths[0].shape
    if any(d.shape != (H, W) for d in depths) or any((c.height, c.width) != (H, W) for c in cameras):
        raise ValueError("all frames must share dimensions")
    if H % factor or W % factor:
        raise ValueError(f"factor {factor} does not divide image size {(H, W)}")
    h, w = H // factor, W // factor
    N = len(depths)
    b, a = np.mgrid[0:h, 0:w]
    pv, pu = b * factor + factor // 2, a * factor + factor // 2
    target = np.full((N, h, w, 2), EMPTY, dtype=np.int64)
    ref_cam, ref_depth = cameras[anchor], depths[anchor]
    for i in range(N):
        if i == anchor:
            continue
        d = depths[i][pv, pu]
        has_surface = np.isfinite(d) & (d > 0)
        u1, v1, z1 = project_points(cameras[i], ref_cam, pu, pv, np.where(has_surface, d, 1.0))
        ok = has_surface & in_frustum(u1, v1, z1, ref_cam)
        cu = np.clip(np.rint(np.nan_to_num(u1)), 0, W - 1).astype(np.int64)
        cv = np.clip(np.rint(np.nan_to_num(v1)), 0, H - 1).astype(np.int64)
        with np.errstate(invalid="ignore"):
            ok &= np.abs(z1 - ref_depth[cv, cu]) < tau
        target[i, ok, 0] = cu[ok] // factor
        target[i, ok, 1] = cv[ok] // factor
    return CorrespondenceMap(target, (H, W), factor, anchor)


def override_latent(x: np.ndarray, cmap: CorrespondenceMap) -> np.ndarray:
    """Copy of ``x`` with every mapped cell replaced by the anchor frame's mapped cell."""
    x = np.asarray(x)
    cmap.check_latent(x.shape)
    out = x.copy()
    i, b, a = np.nonzero(cmap.valid)
    tc, tr = cmap.target[i, b, a, 0], cmap.target[i, b, a, 1]
    out[i, :, b, a] = x[cmap.anchor][:, tr, tc].T
    return out


def format_correspondence(cmap: CorrespondenceMap) -> str:
    """Debug dump: one text grid per frame, ``a,b->a1,b1`` per cell or ``.`` if unmapped."""
    lines = []
    for i in range(cmap.frame_count):
        lines.append(f"frame {i}")
        for b in range(cmap.latent_shape[0]):
            row = []
            for a in range(cmap.latent_shape[1]):
                tc, tr = cmap.target[i, b, a]
                row.append("." if tc < 0 else f"{a},{b}->{tc},{tr}")
            lines.append(" ".join(row))
    return "\n".join(lines) + "\n"
