"""Unrestrained simplex denoising on Dirichlet probability paths."""

from .models import AtomDataset, DenseDenoiser, ExactPosterior, LinearPropertyRegressor, MiniMPNN
from .paths import DirichletPath, InterpolantPath, NoiseSchedule, alpha_of_t, noise_forward
from .sampling import GuidanceConfig, SampleRunConfig, corrector_step, denoise_step, sample
from .simplex import (
    DirichletParams,
    MarginalMixturePrior,
    ValidationError,
    dirichlet_log_density,
    nearest_vertex,
    sample_dirichlet,
    sample_gamma,
)
from .state import MultiSimplexState
from .training import TrainConfig, load_checkpoint, save_checkpoint, train
from .voronoi import VoronoiQuery, voronoi_prob_closed_form

__version__ = "0.1.0"

__all__ = [
    "AtomDataset", "DenseDenoiser", "DirichletParams", "DirichletPath", "ExactPosterior",
    "GuidanceConfig", "InterpolantPath", "LinearPropertyRegressor", "MarginalMixturePrior",
    "MiniMPNN", "MultiSimplexState", "NoiseSchedule", "SampleRunConfig", "TrainConfig",
    "ValidationError", "VoronoiQuery", "alpha_of_t", "corrector_step", "denoise_step",
    "dirichlet_log_density", "load_checkpoint", "nearest_vertex", "noise_forward", "sample",
    "sample_dirichlet", "sample_gamma", "save_checkpoint", "train", "voronoi_prob_closed_form",
]
