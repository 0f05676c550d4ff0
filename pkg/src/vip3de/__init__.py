"""Training-free multi-view 3D editing on a point-splat scene with toy video priors."""
from .diffusion import (AnalyticGaussianDenoiser, Denoiser, EDMDenoiser, NoiseSchedule, blend_noise,
                        edm_denoise_step, edm_invert_step, invert, make_schedule, sample)
from .correspondence import CorrespondenceMap, build_correspondence, override_latent
from .pipeline import EditConfig, EditResult, EditSpec, make_editor, run_vip3de
from .scene import Camera, PointScene, render, update_scene
from .trajectory import CameraPath, build_trajectory, sort_cameras, slerp

__version__ = "0.1.0"

__all__ = [
    "AnalyticGaussianDenoiser", "Camera", "CameraPath", "CorrespondenceMap", "Denoiser", "EDMDenoiser",
    "EditConfig", "EditResult", "EditSpec", "NoiseSchedule", "PointScene", "blend_noise",
    "build_correspondence", "build_trajectory", "edm_denoise_step", "edm_invert_step", "invert",
    "make_editor", "make_schedule", "override_latent", "render", "run_vip3de", "sample", "slerp",
    "sort_cameras", "update_scene",
]
