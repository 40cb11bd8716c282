"""Task-parameterized training and adaptation to new frame configurations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .gaussian import AffineFrame, Gaussian, product_of_gaussians, transform
from .markov import EMConfig, HsmmModel, fit_frames


@dataclass(frozen=True, eq=False)
class FrameSet:
    """Ordered coordinate systems attached to one demonstration or situation."""

    frames: tuple

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise InputError("a FrameSet needs at least one frame")
        if any(f.dim != frames[0].dim for f in frames):
            raise InputError("all frames must share the same dimension")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, j) -> AffineFrame:
        return self.frames[j]

    @property
    def dim(self) -> int:
        return self.frames[0].dim

    @classmethod
    def identity(cls, dim: int, count: int = 1) -> "FrameSet":
        return cls(tuple(AffineFrame.identity(dim) for _ in range(count)))


@dataclass(frozen=True, eq=False)
class AdaptedModel:
    """Single-frame HSMM obtained by fusing per-frame Gaussians in a new situation."""

    model: HsmmModel
    source: HsmmModel
    frames: FrameSet


def project_demo(demo, frames: FrameSet):
    """Express a (T, D) demonstration in every frame: ``A^-1 (x - b)``."""
    x = np.atleast_2d(np.asarray(demo, dtype=float))
    if x.shape[1] != frames.dim:
        raise InputError(f"demonstration dimension {x.shape[1]} != frame dimension {frames.dim}")
    return [np.linalg.solve(f.A, (x - f.b).T).T for f in frames]


def tp_em_fit(dataset, K: int, config: EMConfig | None = None) -> HsmmModel:
    """EM with one Gaussian per state and frame, multiplied in the emission.

    ``dataset`` is an iterable of demonstrations exposing ``points`` (T, D)
    and ``frames`` (FrameSet), or of ``(points, frames)`` pairs.
    """
    pairs = [(d.points, d.frames) if hasattr(d, "frames") else tuple(d) for d in dataset]
    if not pairs:
        raise InputError("dataset is empty")
    F = len(pairs[0][1])
    for m, (_, fs) in enumerate(pairs):
        if len(fs) != F:
            raise InputError(f"demonstration {m} has {len(fs)} frames, expected {F}")
    demos = [np.stack(project_demo(x, fs)) for x, fs in pairs]
    return fit_frames(demos, K, config)


def adapt(model: HsmmModel, new_frames: FrameSet) -> AdaptedModel:
    """Global Gaussians for a new situation via products of transformed Gaussians."""
    if len(new_frames) != model.F:
        raise InputError(f"model has {model.F} frames but {len(new_frames)} were given")
    if new_frames.dim != model.D:
        raise InputError(f"frame dimension {new_frames.dim} != model dimension {model.D}")
    means = np.empty((model.K, 1, model.D))
    covs = np.empty((model.K, 1, model.D, model.D))
    for i in range(model.K):
        g = product_of_gaussians(
            transform(Gaussian(model.means[i, j], model.covs[i, j]), f) for j, f in enumerate(new_frames)
        )
        means[i, 0], covs[i, 0] = g.mean, g.cov
    adapted = HsmmModel(
        priors=model.priors,
        trans=model.trans,
        means=means,
        covs=covs,
        dur_mean=model.dur_mean,
        dur_var=model.dur_var,
        s_max=model.s_max,
        trans_mask=model.trans_mask,
    )
    return AdaptedModel(adapted, model, new_frames)
