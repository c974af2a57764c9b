"""Quantum denoising diffusion models on a numpy state-vector simulator."""

from .diffusion import DiffusionSchedule, inpaint, sample, train
from .grad import ParamStore, adam_step
from .models import QDense, QDenseConfig, QUNet, QUNetConfig, build_model
from .uss import USSConfig, USSModel, compose_diffusion_unitary, uss_sample

__all__ = [
    "DiffusionSchedule",
    "ParamStore",
    "QDense",
    "QDenseConfig",
    "QUNet",
    "QUNetConfig",
    "USSConfig",
    "USSModel",
    "adam_step",
    "build_model",
    "compose_diffusion_unitary",
    "inpaint",
    "sample",
    "train",
    "uss_sample",
]
