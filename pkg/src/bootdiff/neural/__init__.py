from .kernels import BACKEND
from .mlp import Denoiser, MlpParams, Preconditioner, fourier_embed
from .train import (TrainConfig, TrainingCurve, train_denoiser,
                    train_view_denoiser)

__all__ = [
    "BACKEND", "Denoiser", "MlpParams", "Preconditioner", "fourier_embed",
    "TrainConfig", "TrainingCurve", "train_denoiser", "train_view_denoiser",
]
