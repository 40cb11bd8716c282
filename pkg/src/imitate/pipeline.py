"""Reproduction pipeline: adapt, decode a step-wise reference, track it with LQT."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, mse
from .errors import InputError
from .lqt import TrackerGains, track
from .markov import HsmmModel, ReferenceTrajectory, decode_reference
from .task_params import FrameSet, adapt


@dataclass(frozen=True, eq=False)
class Reproduction:
    positions: np.ndarray  # (T, D)
    states: np.ndarray  # (T, 2D) full double-integrator state
    controls: np.ndarray
    reference: ReferenceTrajectory
    gains: TrackerGains


def reproduce(model: HsmmModel, x0, horizon: int, frames: FrameSet | None = None,
              dt: float = 0.01, r_scalar: float = 9.0) -> Reproduction:
    """Generate a motion from ``x0`` (a position) for ``horizon`` steps.

    Task-parameterized models are first adapted to ``frames``; the decoded
    reference starts from ``x0`` as the only observation.
    """
    if frames is not None:
        model = adapt(model, frames).model
    elif model.F != 1:
        raise InputError(f"model has {model.F} frames; pass the frames of the new situation")
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape[0] != model.D:
        raise InputError(f"initial position has dimension {x0.shape[0]}, model expects {model.D}")
    ref = decode_reference(model, x0[None], horizon)
    X, U, gains = track(ref, x0, dt, r_scalar)
    return Reproduction(X[:, : model.D], X, U, ref, gains)


def evaluate(model: HsmmModel, dataset: Dataset, indices=None, r_scalar: float = 9.0, dims=None):
    """Per-demo position MSE of reproductions started at each demo's first point."""
    indices = list(range(len(dataset))) if indices is None else list(indices)
    if not indices:
        raise InputError("empty demo selection")
    dims = dataset.position_dims if dims is None else dims
    errors = []
    for m in indices:
        demo = dataset[m]
        frames = demo.frames if model.F > 1 else None
        rep = reproduce(model, demo.points[0], len(demo), frames, dataset.dt, r_scalar)
        errors.append(mse(rep.positions, demo.points, dims))
    return np.asarray(errors)
