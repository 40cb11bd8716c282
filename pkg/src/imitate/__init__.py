"""Learning, adapting and reproducing demonstrated manipulation motions.

Hidden semi-Markov models with task-parameterized Gaussian emissions are
learned from demonstrations, adapted to new coordinate frames, decoded into a
step-wise reference and tracked with a linear quadratic controller.
"""
from ._kernels import BACKEND
from .data import Dataset, Demo, gen_pickplace, gen_zshape, load_dataset, load_model, mse, save_dataset, save_model
from .errors import DataFormatError, InputError, NumericError
from .gaussian import AffineFrame, Gaussian, kmeans_init, product_of_gaussians, transform
from .latent import MfaParams, SemiTiedParams, count_parameters
from .lqt import LinearSystem, dare_solve, double_integrator, riccati_backward, rollout, weights_from_reference
from .markov import (
    EMConfig,
    HsmmModel,
    ReferenceTrajectory,
    decode_reference,
    em_fit,
    estimate_durations,
    filter_state,
    forward_backward,
    hsmm_forward,
    sample_states_stochastic,
)
from .pipeline import evaluate, reproduce
from .sva import SvaHyper, SvaState, subspace_distance, sva_fit, sva_loss, sva_observe, to_hsmm
from .task_params import FrameSet, adapt, tp_em_fit

__all__ = [
    "adapt",
    "AffineFrame",
    "BACKEND",
    "count_parameters",
    "dare_solve",
    "DataFormatError",
    "Dataset",
    "decode_reference",
    "Demo",
    "double_integrator",
    "em_fit",
    "EMConfig",
    "estimate_durations",
    "evaluate",
    "filter_state",
    "forward_backward",
    "FrameSet",
    "Gaussian",
    "gen_pickplace",
    "gen_zshape",
    "hsmm_forward",
    "HsmmModel",
    "InputError",
    "kmeans_init",
    "LinearSystem",
    "load_dataset",
    "load_model",
    "MfaParams",
    "mse",
    "NumericError",
    "product_of_gaussians",
    "ReferenceTrajectory",
    "reproduce",
    "riccati_backward",
    "rollout",
    "sample_states_stochastic",
    "save_dataset",
    "save_model",
    "SemiTiedParams",
    "subspace_distance",
    "sva_fit",
    "sva_loss",
    "sva_observe",
    "SvaHyper",
    "SvaState",
    "to_hsmm",
    "tp_em_fit",
    "transform",
    "weights_from_reference",
]

__version__ = "0.1.0"
