"""Single-pass multi-view editing: render, edit one view, invert, blend, guided sampling, update."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from . import diffusion
from .correspondence import build_correspondence
from .scene import BACKGROUND, Camera, PointScene, RenderedFrame, View, render_all, update_scene

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, err: Exception):
        super().__init__(f"[{stage}] {err}")
        self.stage = stage


@dataclass
class EditConfig:
    eta: float = 0.15
    tau: float = 0.5
    w_min: float = 1.0
    w_max: float = 1.5
    steps: int = 25
    factor: int = 8
    update_iters: int = 750
    lr: float = 0.05
    seed: int = 0
    condition_index: int | None = None
    context_len: int = 25
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0
    sigma_data: float = 0.05
    geometry: bool = True
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta out of range: {self.eta}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive: {self.tau}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1: {self.steps}")
        if self.factor < 1:
            raise ValueError(f"factor must be >= 1: {self.factor}")
        if self.update_iters < 0:
            raise ValueError(f"update_iters must be >= 0: {self.update_iters}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive: {self.lr}")
        if self.context_len < 2:
            raise ValueError(f"context_len must be >= 2: {self.context_len}")
        if self.condition_index is not None and self.condition_index < 0:
            raise ValueError(f"condition_index must be >= 0: {self.condition_index}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1: {self.threads}")

    @property
    def guidance(self):
        return (self.w_min, self.w_max)

    def schedule(self) -> diffusion.NoiseSchedule:
        return diffusion.make_schedule(self.steps, self.sigma_min, self.sigma_max, self.rho, self.sigma_data)

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]


# ---------------------------------------------------------------------------
# editors


class ToyEditor:
    """Image-space stand-in for an instruction-driven 2D editor."""

    def __call__(self, image: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def recolor_points(self, colors: np.ndarray) -> np.ndarray:
        """Apply the same edit to raw point colors (oracle edits)."""
        return self(np.asarray(colors).reshape(-1, 1, 3)).reshape(-1, 3)


class IdentityEditor(ToyEditor):
    def __call__(self, image):
        return np.asarray(image, dtype=np.float64).copy()


@dataclass
class RecolorEditor(ToyEditor):
    """Channel-affine recolor ``c' = clip(M c + b)``."""

    matrix: np.ndarray = field(default_factory=lambda: np.eye(3))
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __call__(self, image):
        M = np.asarray(self.matrix, dtype=np.float64).reshape(3, 3)
        b = np.asarray(self.offset, dtype=np.float64).reshape(3)
        return np.clip(np.asarray(image) @ M.T + b, 0.0, 1.0)


@dataclass
class HueRotateEditor(ToyEditor):
    """Rotate hue by ``degrees`` about the gray axis."""

    degrees: float = 120.0

    def __call__(self, image):
        th = np.deg2rad(self.degrees)
        c, s = np.cos(th), np.sin(th)
        k = 1 / 3
        sq = np.sqrt(k)
        M = np.array([
            [c + (1 - c) * k, k * (1 - c) - sq * s, k * (1 - c) + sq * s],
            [k * (1 - c) + sq * s, c + k * (1 - c), k * (1 - c) - sq * s],
            [k * (1 - c) - sq * s, k * (1 - c) + sq * s, c + k * (1 - c)],
        ])
        return np.clip(np.asarray(image) @ M.T, 0.0, 1.0)


@dataclass
class RegionRecolorEditor(ToyEditor):
    """Paint a solid color into an axis-aligned pixel box (x0, y0, x1, y1), exclusive end."""

    box: tuple[int, int, int, int] = (0, 0, 0, 0)
    color: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __call__(self, image):
        out = np.asarray(image, dtype=np.float64).copy()
        x0, y0, x1, y1 = self.box
        out[y0:y1, x0:x1] = self.color
        return out

    def recolor_points(self, colors):
        raise TypeError("region edits are image-space only")


def make_editor(kind: str, params: dict | None = None) -> ToyEditor:
    params = params or {}
    if kind == "identity":
        return IdentityEditor()
    if kind == "recolor":
        return RecolorEditor(np.asarray(params.get("matrix", np.eye(3)), dtype=np.float64).reshape(3, 3),
                             np.asarray(params.get("offset", np.zeros(3)), dtype=np.float64).reshape(3))
    if kind == "hue":
        return HueRotateEditor(float(params.get("degrees", 120.0)))
    if kind == "region":
        return RegionRecolorEditor(tuple(int(v) for v in params["box"]),
                                   tuple(float(v) for v in params.get("color", (1.0, 0.0, 0.0))))
    raise ValueError(f"unknown editor {kind!r}")


@dataclass
class EditSpec:
    """The toy instruction: which editor to run and optional per-view masks."""

    editor: ToyEditor
    masks: Sequence[np.ndarray] | None = None

    def mask(self, i: int) -> np.ndarray | None:
        return None if self.masks is None else self.masks[i]


# ---------------------------------------------------------------------------
# codec


def encode_video(frames: Sequence[np.ndarray], f: int) -> np.ndarray:
    """(N, H, W, 3) images -> (N, 3, H/f, W/f) latents by f x f area averaging."""
    x = np.asarray(frames, dtype=np.float64)
    N, H, W, C = x.shape
    if H % f or W % f:
        raise ValueError(f"factor {f} does not divide image size {(H, W)}")
    x = x.reshape(N, H // f, f, W // f, f, C).mean(axis=(2, 4))
    return x.transpose(0, 3, 1, 2)


def _upsample_axis(x: np.ndarray, f: int, axis: int) -> np.ndarray:
    n = x.shape[axis]
    # output pixel centres in latent-cell coordinates
    pos = (np.arange(n * f) + 0.5) / f - 0.5
    pos = np.clip(pos, 0, n - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    frac = pos - lo
    shape = [1] * x.ndim
    shape[axis] = n * f
    frac = frac.reshape(shape)
    return np.take(x, lo, axis=axis) * (1 - frac) + np.take(x, hi, axis=axis) * frac


def decode_video(latent: np.ndarray, f: int) -> np.ndarray:
    """(N, 3, h, w) latents -> (N, h*f, w*f, 3) images by bilinear upsampling."""
    x = np.asarray(latent, dtype=np.float64)
    if f == 1:
        return x.transpose(0, 2, 3, 1).copy()
    x = _upsample_axis(_upsample_axis(x, f, 2), f, 3)
    return x.transpose(0, 2, 3, 1)


# ---------------------------------------------------------------------------
# condition frame, splitting, chunking


def edit_saliency(source: np.ndarray, edited: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean absolute edit magnitude inside the mask (0 if the mask is empty)."""
    diff = np.abs(np.asarray(edited) - np.asarray(source)).mean(axis=-1)
    if mask is None:
        return float(diff.mean())
    m = np.asarray(mask, dtype=np.float64)
    return float((diff * m).sum() / m.sum()) if m.sum() > 0 else 0.0


def select_condition_frame(frames: Sequence[np.ndarray], editor: ToyEditor, spec: EditSpec | None = None,
                           config: EditConfig | None = None,
                           scorer: Callable = edit_saliency) -> tuple[int, np.ndarray]:
    """Pick the view to edit and condition on; ties go to the lowest index."""
    if len(frames) == 0:
        raise ValueError("no frames")
    if config is not None and config.condition_index is not None:
        k = config.condition_index
        if k >= len(frames):
            raise ValueError(f"condition_index {k} out of range for {len(frames)} frames")
        return k, editor(frames[k])
    best, best_score, best_edit = 0, -np.inf, None
    for i, frame in enumerate(frames):
        edited = editor(frame)
        score = scorer(frame, edited, None if spec is None else spec.mask(i))
        if score > best_score:
            best, best_score, best_edit = i, score, edited
    return best, best_edit


def split_for_parallel(frame_count: int, cond_idx: int) -> tuple[list[int], list[int]]:
    """Two sub-sequences that both start at the condition frame; the prefix runs backwards."""
    if not 0 <= cond_idx < frame_count:
        raise ValueError(f"condition index {cond_idx} out of range for {frame_count} frames")
    return list(range(cond_idx, -1, -1)), list(range(cond_idx, frame_count))


def chunk_autoregressive(indices: Sequence[int], context_len: int) -> list[list[int]]:
    """Overlapping chunks of at most ``context_len``; each starts on the previous chunk's last frame."""
    if context_len < 2:
        raise ValueError("context_len must be >= 2")
    indices = list(indices)
    chunks, start = [], 0
    while True:
        chunks.append(indices[start:start + context_len])
        if start + context_len >= len(indices):
            return chunks
        start += context_len - 1


# ---------------------------------------------------------------------------
# priors


def edited_video_prior(target_frames: np.ndarray, condition: np.ndarray, config: EditConfig) -> diffusion.AnalyticGaussianDenoiser:
    """Analytic stand-in for the video model: Gaussian around the target video,
    shifted by the condition's mean color relative to ``condition``."""
    mu = encode_video(target_frames, config.factor)
    ref = encode_video(np.asarray(condition)[None], config.factor)[0]
    return diffusion.AnalyticGaussianDenoiser(mu, config.sigma_data, reference=ref)


def oracle_edit(scene: PointScene, cameras: Sequence[Camera], editor: ToyEditor,
                background=BACKGROUND) -> tuple[PointScene, np.ndarray]:
    """Apply ``editor`` to the point colors directly and render the result."""
    edited = scene.with_colors(editor.recolor_points(scene.colors))
    frames = np.stack([fr.rgb for fr in render_all(edited, cameras, background)])
    return edited, frames


# ---------------------------------------------------------------------------
# end-to-end


@dataclass
class EditResult:
    scene: PointScene
    frames: np.ndarray  # (N, H, W, 3) edited views after mask compositing
    latent: np.ndarray  # (N, C, h, w) sampled latent in trajectory order
    source: list[RenderedFrame]
    condition_index: int
    condition: np.ndarray
    counters: dict
    timings: dict
    condition_target: np.ndarray | None = None  # prior mean under the condition, when the prior exposes one


def _solve_chunks(chunks, x_T, depths, cameras, cond_latent, denoiser, schedule, config):
    """Sequentially sample the chunks of one sub-video; returns {frame index: latent frame}."""
    out = {}
    cond = cond_latent
    for chunk in chunks:
        den = denoiser.for_frames(chunk)
        cmap = None
        if config.geometry and len(chunk) > 1:
            cmap = build_correspondence([depths[i] for i in chunk], [cameras[i] for i in chunk],
                                        config.tau, config.factor, anchor=0)
        x0 = diffusion.sample(x_T[chunk], schedule, den, cond, config.guidance, cmap)
        for j, i in enumerate(chunk):
            out.setdefault(i, x0[j])
        # the last sampled frame conditions the next chunk
        cond = x0[-1]
    return out


def run_vip3de(scene: PointScene, cameras: Sequence[Camera], spec: EditSpec, config: EditConfig,
               denoiser: diffusion.Denoiser | Callable | None = None,
               background=BACKGROUND) -> EditResult:
    """Edit ``scene`` along ``cameras`` with one inversion pass and one sampling pass.

    ``denoiser`` defaults to an analytic prior around the per-view edited
    renders; pass a callable ``(condition_frame, source_frames) -> Denoiser`` to
    build one from the chosen condition.
    """
    config.validate()
    cameras = list(cameras)
    N = len(cameras)
    if N < 2:
        raise StageError("input", ValueError("trajectory too short"))
    counters = {"render": 0, "invert": 0, "sample": 0, "update": 0, "invert_calls": 0, "sample_calls": 0}
    timings = {}
    clock = time.perf_counter

    def stage(name):
        class _S:
            def __enter__(self):
                self.t0 = clock()

            def __exit__(self, et, ev, tb):
                timings[name] = timings.get(name, 0.0) + clock() - self.t0
                if ev is not None and not isinstance(ev, StageError):
                    raise StageError(name, ev) from ev
        return _S()

    with stage("render"):
        source = render_all(scene, cameras, background)
        counters["render"] += 1
        src_rgb = np.stack([fr.rgb for fr in source])
        depths = [fr.depth for fr in source]

    with stage("edit"):
        k, cond_img = select_condition_frame(list(src_rgb), spec.editor, spec, config)
        log.info("condition frame %d", k)

    with stage("encode"):
        x0 = encode_video(src_rgb, config.factor)
        cond_latent = encode_video(cond_img[None], config.factor)[0]
        if denoiser is None:
            denoiser = edited_video_prior(np.stack([spec.editor(f) for f in src_rgb]), cond_img, config)
        elif not isinstance(denoiser, diffusion.Denoiser):
            denoiser = denoiser(cond_img, src_rgb)
        schedule = config.schedule()

    prefix, suffix = split_for_parallel(N, k)
    subs = [s for s in (prefix, suffix) if len(s) > 1] or [suffix]
    sub_chunks = [chunk_autoregressive(s, config.context_len) for s in subs]

    with stage("invert"):
        x_T = np.zeros_like(x0)
        for chunks in sub_chunks:
            for chunk in chunks:
                src_cond = x0[chunk[0]]
                x_T[chunk] = diffusion.invert(x0[chunk], schedule, denoiser.for_frames(chunk), src_cond)[-1]
                counters["invert_calls"] += 1
        counters["invert"] += 1

    with stage("blend"):
        rng = np.random.default_rng(config.seed)
        eps = diffusion.draw_noise(x0.shape, schedule.sigma(schedule.T), rng)
        x_hat_T = diffusion.blend_noise(x_T, eps, config.eta)

    with stage("sample"):
        args = (x_hat_T, depths, cameras, cond_latent, denoiser, schedule, config)
        if config.threads > 1 and len(sub_chunks) > 1:
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                parts = list(pool.map(lambda ch: _solve_chunks(ch, *args), sub_chunks))
        else:
            parts = [_solve_chunks(ch, *args) for ch in sub_chunks]
        # the suffix (processed last) wins on the duplicated condition frame
        merged = {}
        for part in parts:
            merged.update(part)
        latent = np.stack([merged[i] for i in range(N)])
        counters["sample_calls"] = sum(len(c) for c in sub_chunks)
        counters["sample"] += 1

    with stage("decode"):
        decoded = decode_video(latent, config.factor)
        edited = decoded.copy()
        if spec.masks is not None:
            for i in range(N):
                m = np.asarray(spec.masks[i], dtype=np.float64)[..., None]
                edited[i] = m * decoded[i] + (1 - m) * src_rgb[i]
        edited = np.clip(edited, 0.0, 1.0)

    new_scene = scene.copy()
    if config.update_iters > 0:
        with stage("update"):
            views = [View(cam, edited[i], spec.mask(i)) for i, cam in enumerate(cameras)]
            new_scene = update_scene(scene, views, config.update_iters, config.lr, background=background)
            counters["update"] += 1

    target = denoiser.mean(cond_latent) if hasattr(denoiser, "mean") else None
    return EditResult(new_scene, edited, latent, source, k, cond_img, counters, timings, target)
