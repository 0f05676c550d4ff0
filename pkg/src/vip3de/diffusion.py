"""EDM probability-flow solver: schedule, Euler denoising, inversion, CFG and noise blending.

Latent videos are plain arrays of shape (N, C, h, w). Step index ``t`` runs
from 0 (clean, sigma = 0) to T (sigma_max).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .correspondence import CorrespondenceMap, override_latent


@dataclass(frozen=True)
class NoiseSchedule:
    sigmas: np.ndarray  # descending, sigmas[-1] == 0, length T + 1
    sigma_data: float = 0.5

    def __post_init__(self):
        s = np.asarray(self.sigmas, dtype=np.float64)
        object.__setattr__(self, "sigmas", s)
        if s[-1] != 0 or np.any(s[:-1] <= 0) or np.any(np.diff(s) >= 0):
            raise ValueError("sigmas must be strictly decreasing and end at 0")

    @property
    def T(self) -> int:
        return len(self.sigmas) - 1

    def sigma(self, t: int) -> float:
        """Noise level at step t (t = 0 is clean)."""
        return float(self.sigmas[self.T - t])

    def c_skip(self, sigma):
        return self.sigma_data**2 / (sigma**2 + self.sigma_data**2)

    def c_out(self, sigma):
        return sigma * self.sigma_data / np.sqrt(sigma**2 + self.sigma_data**2)

    def c_in(self, sigma):
        return 1.0 / np.sqrt(sigma**2 + self.sigma_data**2)

    def c_noise(self, sigma):
        return 0.25 * np.log(sigma)


def make_schedule(T: int = 25, sigma_min: float = 0.002, sigma_max: float = 80.0,
                  rho: float = 7.0, sigma_data: float = 0.5) -> NoiseSchedule:
    """Karras rho-warped sigmas from sigma_max down to sigma_min, then 0."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0 < sigma_min < sigma_max:
        raise ValueError("need 0 < sigma_min < sigma_max")
    if rho <= 0 or sigma_data <= 0:
        raise ValueError("rho and sigma_data must be positive")
    if T == 1:
        return NoiseSchedule(np.array([sigma_max, 0.0]), sigma_data)
    i = np.arange(T)
    hi, lo = sigma_max ** (1 / rho), sigma_min ** (1 / rho)
    sig = (hi + i / (T - 1) * (lo - hi)) ** rho
    sig[0], sig[-1] = sigma_max, sigma_min
    return NoiseSchedule(np.append(sig, 0.0), sigma_data)


class Denoiser:
    """Estimate of the clean latent, ``D(x, sigma; condition)``.

    ``condition`` is a single latent frame of shape (C, h, w), or None for the
    unconditional branch. Subclasses that hold per-frame state override
    ``for_frames`` so the pipeline can run them on reordered sub-videos.
    """

    def __call__(self, x: np.ndarray, sigma: float, condition: np.ndarray | None = None) -> np.ndarray:
        raise NotImplementedError

    def for_frames(self, indices) -> "Denoiser":
        return self


class EDMDenoiser(Denoiser):
    """Wraps a raw network ``F(c_in * x, c_noise, condition)`` with EDM preconditioning."""

    def __init__(self, network: Callable, schedule: NoiseSchedule):
        self.network = network
        self.schedule = schedule

    def __call__(self, x, sigma, condition=None):
        s = self.schedule
        F = self.network(s.c_in(sigma) * x, s.c_noise(sigma), condition)
        return s.c_skip(sigma) * x + s.c_out(sigma) * F


class AnalyticGaussianDenoiser(Denoiser):
    """Exact denoiser for data distributed as N(mu, sigma_data^2 I).

    With a ``reference`` condition frame the mean is condition-shifted: the
    per-channel mean difference between the given condition and the reference
    is added to every frame of ``mu``. The unconditional branch uses ``mu``.
    """

    def __init__(self, mu: np.ndarray, sigma_data: float = 0.5, reference: np.ndarray | None = None):
        self.mu = np.asarray(mu, dtype=np.float64)
        self.sigma_data = float(sigma_data)
        self.reference = None if reference is None else np.asarray(reference, dtype=np.float64)

    def mean(self, condition=None) -> np.ndarray:
        if condition is None or self.reference is None:
            return self.mu
        shift = np.asarray(condition).mean(axis=(-2, -1)) - self.reference.mean(axis=(-2, -1))
        return self.mu + shift[None, :, None, None]

    def __call__(self, x, sigma, condition=None):
        s2 = self.sigma_data**2
        return (s2 * x + sigma**2 * self.mean(condition)) / (sigma**2 + s2)

    def for_frames(self, indices):
        return AnalyticGaussianDenoiser(self.mu[list(indices)], self.sigma_data, self.reference)


def edm_denoise_step(x: np.ndarray, t: int, schedule: NoiseSchedule, denoiser: Callable,
                     condition=None, denoised: np.ndarray | None = None) -> np.ndarray:
    """One Euler step of the probability-flow ODE from level t to t - 1.

    ``denoised`` may carry a precomputed (e.g. guided) estimate at level t.
    """
    if t < 1 or t > schedule.T:
        raise ValueError(f"cannot denoise from step {t}")
    s_now, s_next = schedule.sigma(t), schedule.sigma(t - 1)
    if denoised is None:
        denoised = denoiser(x, s_now, condition)
    return x + (s_next - s_now) / s_now * (x - denoised)


def edm_invert_step(x: np.ndarray, t: int, schedule: NoiseSchedule, denoiser: Callable,
                    condition=None) -> np.ndarray:
    """Map x_t to x_{t+1} by solving the Euler step for its input.

    The Euler step is rearranged into a closed form in x_{t+1} in which only the
    network output F is unknown; F is evaluated on the current latent x_t at the
    target noise level. The result is the exact inverse of ``edm_denoise_step``
    whenever F does not depend on its input (e.g. the analytic Gaussian denoiser
    with matching ``sigma_data``), and needs no special case at sigma = 0.
    """
    if t < 0 or t >= schedule.T:
        raise ValueError(f"cannot invert from step {t}")
    s_now, s_next = schedule.sigma(t), schedule.sigma(t + 1)
    cs, _co = schedule.c_skip(s_next), schedule.c_out(s_next)
    out_F = denoiser(x, s_next, condition) - cs * x  # c_out * F at the target level
    return (s_next * x + (s_now - s_next) * out_F) / (s_now - s_now * cs + s_next * cs)


def invert(x0: np.ndarray, schedule: NoiseSchedule, denoiser: Callable, condition=None) -> list[np.ndarray]:
    """Integrate from the clean latent up to sigma_max; returns [x_1, ..., x_T]."""
    xs, x = [], np.asarray(x0, dtype=np.float64)
    for t in range(schedule.T):
        x = edm_invert_step(x, t, schedule, denoiser, condition)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"inversion diverged at step {t + 1}")
        xs.append(x)
    return xs


def draw_noise(shape, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian noise with standard deviation ``sigma``."""
    return sigma * rng.standard_normal(shape)


def blend_noise(x_T: np.ndarray, epsilon: np.ndarray, eta: float = 0.15) -> np.ndarray:
    """Motion-preserved blend: sqrt(eta) * inverted + sqrt(1 - eta) * fresh noise."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta out of range: {eta}")
    if np.shape(x_T) != np.shape(epsilon):
        raise ValueError("shape mismatch between inverted and fresh noise")
    return np.sqrt(eta) * x_T + np.sqrt(1.0 - eta) * epsilon


def guidance_weights(w, frames: int) -> np.ndarray:
    """Per-frame guidance scale; ``w`` is a scalar, a (w_min, w_max) ramp or an array."""
    if np.isscalar(w):
        return np.full(frames, float(w))
    w = np.asarray(w, dtype=np.float64)
    if w.shape == (2,) and frames != 2:
        return np.linspace(w[0], w[1], frames)
    if w.shape == (2,):
        return w.copy()
    if w.shape != (frames,):
        raise ValueError(f"guidance of shape {w.shape} for {frames} frames")
    return w


def cfg_combine(cond_out: np.ndarray, uncond_out: np.ndarray, w=1.0) -> np.ndarray:
    """(1 + w) * conditional - w * unconditional, with ``w`` broadcast per frame."""
    cond_out, uncond_out = np.asarray(cond_out), np.asarray(uncond_out)
    if cond_out.shape != uncond_out.shape:
        raise ValueError("shape mismatch between guidance branches")
    if cond_out.ndim == 4:
        w = guidance_weights(w, cond_out.shape[0])[:, None, None, None]
    return (1 + w) * cond_out - w * uncond_out


def sample(x_hat_T: np.ndarray, schedule: NoiseSchedule, denoiser: Callable, condition=None,
           w=0.0, correspondence: CorrespondenceMap | None = None,
           hook: Callable | None = None) -> np.ndarray:
    """Guided Euler sampling from sigma_max to 0 with optional geometry-aware overriding.

    At each step the conditional branch sees the latent with mapped cells
    replaced by anchor-frame values; the unconditional branch sees it unchanged.
    Guidance combines the two denoised estimates. ``hook(t, x, x_cond)`` is
    called after overriding, before the denoiser is evaluated.
    """
    x = np.asarray(x_hat_T, dtype=np.float64)
    if correspondence is not None:
        correspondence.check_latent(x.shape)
    weights = guidance_weights(w, x.shape[0])
    guided = np.any(weights != 0)
    for t in range(schedule.T, 0, -1):
        sigma = schedule.sigma(t)
        x_c = x if correspondence is None else override_latent(x, correspondence)
        if hook is not None:
            hook(t, x, x_c)
        d = denoiser(x_c, sigma, condition)
        if guided:
            d = cfg_combine(d, denoiser(x, sigma, None), weights)
        x = edm_denoise_step(x, t, schedule, denoiser, denoised=d)
    return x
