"""
Services package for the rf2pose application.
"""

from .diffusion import Denoiser, NoiseSchedule, build_schedule, ddim_sample, ddpm_sample, train_ddpm
from .adversarial import Discriminator, Generator, cgan_sample, cgan_train

# The pose estimator imports core.counterfactual, which imports this
# package; import it from rf2pose.services.hpe directly.

__all__ = [
    'Denoiser',
    'NoiseSchedule',
    'build_schedule',
    'ddim_sample',
    'ddpm_sample',
    'train_ddpm',
    'Discriminator',
    'Generator',
    'cgan_sample',
    'cgan_train'
]
