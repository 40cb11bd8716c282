"""Datasets, model files, synthetic task generators and trajectory error.

Files are UTF-8 JSON with a ``"version": "v1"`` field. Floats are written by
``json`` using the shortest repr that round-trips, so save followed by load
reproduces every numeric field bit for bit.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, InputError
from .gaussian import AffineFrame
from .markov import HsmmModel
from .task_params import FrameSet

FORMAT_VERSION = "v1"


@dataclass(frozen=True, eq=False)
class Demo:
    points: np.ndarray  # (T, D)
    frames: FrameSet

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[1] != self.frames.dim:
            raise InputError(f"points have dimension {pts.shape[1]} but frames have {self.frames.dim}")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class Dataset:
    demos: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        demos = tuple(self.demos)
        if not demos:
            raise InputError("a dataset needs at least one demonstration")
        D, F = demos[0].points.shape[1], len(demos[0].frames)
        for m, d in enumerate(demos):
            if d.points.shape[1] != D:
                raise InputError(f"demo {m} has dimension {d.points.shape[1]}, expected {D}")
            if len(d.frames) != F:
                raise InputError(f"demo {m} has {len(d.frames)} frames, expected {F}")
        object.__setattr__(self, "demos", demos)
        object.__setattr__(self, "metadata", {str(k): str(v) for k, v in self.metadata.items()})

    @property
    def D(self) -> int:
        return self.demos[0].points.shape[1]

    @property
    def F(self) -> int:
        return len(self.demos[0].frames)

    def __len__(self) -> int:
        return len(self.demos)

    def __iter__(self):
        return iter(self.demos)

    def __getitem__(self, m) -> Demo:
        return self.demos[m]

    @property
    def dt(self) -> float:
        return float(self.metadata.get("dt", 0.01))

    @property
    def position_dims(self) -> list:
        raw = self.metadata.get("position_dims")
        return list(range(self.D)) if not raw else [int(v) for v in raw.split(",")]

    def split(self, name: str) -> list:
        """Indices of demos labelled ``name`` in the ``split`` metadata entry."""
        labels = self.metadata.get("split")
        if name == "all":
            return list(range(len(self)))
        if not labels:
            raise InputError("dataset has no split labels")
        return [m for m, s in enumerate(labels.split(",")) if s == name]

    def subset(self, indices) -> "Dataset":
        indices = list(indices)
        if not indices:
            raise InputError("empty demo selection")
        meta = dict(self.metadata)
        if "split" in meta:
            labels = meta["split"].split(",")
            meta["split"] = ",".join(labels[m] for m in indices)
        return Dataset(tuple(self.demos[m] for m in indices), meta)


# -- serialization -----------------------------------------------------------


def _frames_to_json(frames: FrameSet):
    return [{"A": f.A.tolist(), "b": f.b.tolist()} for f in frames]


def _read_json(path):
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise DataFormatError(f"{path}: top level must be an object")
    version = obj.get("version")
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported format version {version!r}")
    return obj


def _write_json(path, obj):
    path = os.fspath(path)
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, allow_nan=False)
            fh.write("\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from exc


def _array(obj, key, where, ndim=None):
    if key not in obj:
        raise DataFormatError(f"{where}: missing field {key!r}")
    try:
        arr = np.asarray(obj[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"{where}: field {key!r} is not a numeric array") from exc
    if ndim is not None and arr.ndim != ndim:
        raise DataFormatError(f"{where}: field {key!r} must have {ndim} dimensions")
    if not np.all(np.isfinite(arr)):
        raise DataFormatError(f"{where}: field {key!r} has non-finite values")
    return arr


def save_dataset(dataset: Dataset, path) -> None:
    obj = {
        "version": FORMAT_VERSION,
        "dim": dataset.D,
        "frame_count": dataset.F,
        "metadata": dict(dataset.metadata),
        "demos": [{"points": d.points.tolist(), "frames": _frames_to_json(d.frames)} for d in dataset],
    }
    _write_json(path, obj)


def load_dataset(path) -> Dataset:
    obj = _read_json(path)
    try:
        D, F = int(obj["dim"]), int(obj["frame_count"])
        raw_demos = obj["demos"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: missing or invalid header field ({exc})") from exc
    if not isinstance(raw_demos, list) or not raw_demos:
        raise DataFormatError(f"{path}: 'demos' must be a non-empty list")
    demos = []
    for m, raw in enumerate(raw_demos):
        where = f"{path}: demo {m}"
        pts = _array(raw, "points", where, ndim=2)
        if pts.shape[1] != D:
            raise DataFormatError(f"{where}: points have dimension {pts.shape[1]}, header says {D}")
        frames_raw = raw.get("frames")
        if not isinstance(frames_raw, list) or len(frames_raw) != F:
            got = len(frames_raw) if isinstance(frames_raw, list) else "no"
            raise DataFormatError(f"{where}: has {got} frames, header says {F}")
        frames = []
        for j, fr in enumerate(frames_raw):
            A = _array(fr, "A", f"{where} frame {j}", ndim=2)
            b = _array(fr, "b", f"{where} frame {j}", ndim=1)
            if A.shape != (D, D) or b.shape != (D,):
                raise DataFormatError(f"{where} frame {j}: expected A {D}x{D} and b of length {D}")
            try:
                frames.append(AffineFrame(A, b))
            except InputError as exc:
                raise DataFormatError(f"{where} frame {j}: {exc}") from exc
        demos.append(Demo(pts, FrameSet(tuple(frames))))
    meta = obj.get("metadata", {})
    if not isinstance(meta, dict):
        raise DataFormatError(f"{path}: 'metadata' must be an object")
    return Dataset(tuple(demos), meta)


_MODEL_ARRAYS = ("priors", "trans", "means", "covs", "dur_mean", "dur_var")
_MODEL_OPTIONAL = ("loadings", "psi", "basis", "diag")


def model_to_dict(model: HsmmModel) -> dict:
    obj = {"version": FORMAT_VERSION, "kind": "hsmm"}
    for key in _MODEL_ARRAYS + _MODEL_OPTIONAL:
        val = getattr(model, key)
        obj[key] = None if val is None else np.asarray(val).tolist()
    obj["trans_mask"] = None if model.trans_mask is None else np.asarray(model.trans_mask, dtype=bool).tolist()
    obj.update(
        s_max=model.s_max,
        structure=model.structure,
        latent_dim=model.latent_dim,
        mppca=model.mppca,
        ll_history=list(model.ll_history),
    )
    return obj


def model_from_dict(obj: dict, where: str = "model") -> HsmmModel:
    if obj.get("kind") != "hsmm":
        raise DataFormatError(f"{where}: not a model file")
    kwargs = {key: _array(obj, key, where) for key in _MODEL_ARRAYS}
    for key in _MODEL_OPTIONAL:
        kwargs[key] = None if obj.get(key) is None else _array(obj, key, where)
    mask = obj.get("trans_mask")
    kwargs["trans_mask"] = None if mask is None else np.asarray(mask, dtype=bool)
    try:
        return HsmmModel(
            s_max=int(obj["s_max"]),
            structure=str(obj["structure"]),
            latent_dim=int(obj["latent_dim"]),
            mppca=bool(obj["mppca"]),
            ll_history=tuple(float(v) for v in obj.get("ll_history", [])),
            **kwargs,
        )
    except KeyError as exc:
        raise DataFormatError(f"{where}: missing field {exc}") from exc
    except InputError as exc:
        raise DataFormatError(f"{where}: {exc}") from exc


def save_model(model: HsmmModel, path) -> None:
    _write_json(path, model_to_dict(model))


def load_model(path) -> HsmmModel:
    return model_from_dict(_read_json(path), os.fspath(path))


def load_frames(path) -> FrameSet:
    """Frame set file: ``{"version": "v1", "frames": [{"A": ..., "b": ...}, ...]}``."""
    obj = _read_json(path)
    raw = obj.get("frames")
    if not isinstance(raw, list) or not raw:
        raise DataFormatError(f"{path}: 'frames' must be a non-empty list")
    frames = []
    for j, fr in enumerate(raw):
        try:
            frames.append(AffineFrame(_array(fr, "A", f"{path} frame {j}", 2), _array(fr, "b", f"{path} frame {j}", 1)))
        except InputError as exc:
            raise DataFormatError(f"{path} frame {j}: {exc}") from exc
    try:
        return FrameSet(tuple(frames))
    except InputError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def save_frames(frames: FrameSet, path) -> None:
    _write_json(path, {"version": FORMAT_VERSION, "frames": _frames_to_json(frames)})


# -- generators --------------------------------------------------------------

ZSHAPE_CORNERS = np.array([[0.0, 1.0], [1.0, 1.0], [0.0, 0.0], [1.0, 0.0]])


def _polyline(corners, T):
    """T samples along a polyline; steps are shared out by segment length and
    every corner is an exact sample."""
    seg = np.linalg.norm(np.diff(corners, axis=0), axis=1)
    nseg = len(seg)
    steps = np.maximum(1, np.round(seg / seg.sum() * (T - 1)).astype(int))
    steps[np.argmax(seg)] += (T - 1) - steps.sum()
    pts = [corners[0][None]]
    for s in range(nseg):
        tau = np.arange(1, steps[s] + 1)[:, None] / steps[s]
        pts.append(corners[s] + tau * (corners[s + 1] - corners[s]))
    return np.vstack(pts)


def gen_zshape(n_demos: int = 5, T: int = 200, noise: float = 0.0, seed: int = 0, spacing: float = 0.1) -> Dataset:
    """Parallel 3-D Z curves: the Z lies in the x-y plane, demos are offset along z."""
    if n_demos < 1 or T < 4:
        raise InputError("gen_zshape needs n_demos >= 1 and T >= 4")
    rng = np.random.default_rng(seed)
    base = _polyline(ZSHAPE_CORNERS, T)
    offsets = (np.arange(n_demos) - 0.5 * (n_demos - 1)) * spacing
    demos = []
    for off in offsets:
        pts = np.column_stack([base, np.full(T, off)])
        if noise > 0:
            pts = pts + noise * rng.standard_normal(pts.shape)
        demos.append(Demo(pts, FrameSet.identity(3)))
    meta = {"generator": "zshape", "dt": "0.05", "position_dims": "0,1,2", "seed": str(seed)}
    return Dataset(tuple(demos), meta)


def _rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def gen_pickplace(n_demos: int = 8, T: int = 100, seed: int = 0) -> Dataset:
    """Planar reach from a start frame over a raised via region to a goal frame.

    The start frame sits at the object (its x axis is the departure
    direction), the goal frame at the placement pose (its x axis is the
    approach direction). A smooth bump of random height is added between
    them. Demos alternate between ``train`` and ``test`` labels.
    """
    if n_demos < 2 or T < 4:
        raise InputError("gen_pickplace needs n_demos >= 2 and T >= 4")
    rng = np.random.default_rng(seed)
    tau = np.linspace(0.0, 1.0, T)[:, None]
    demos = []
    for _ in range(n_demos):
        start = np.array([0.0, 0.0]) + rng.uniform(-0.15, 0.15, 2)
        goal = np.array([1.0, 0.0]) + rng.uniform(-0.15, 0.15, 2)
        A_s = _rotation(math.pi / 2 + rng.uniform(-0.3, 0.3))
        A_g = _rotation(-math.pi / 2 + rng.uniform(-0.3, 0.3))
        reach = 0.3
        p1 = start + reach * A_s[:, 0]
        p2 = goal - reach * A_g[:, 0]
        bez = (
            (1 - tau) ** 3 * start
            + 3 * (1 - tau) ** 2 * tau * p1
            + 3 * (1 - tau) * tau ** 2 * p2
            + tau ** 3 * goal
        )
        height = rng.uniform(0.0, 0.1)
        pts = bez + height * np.sin(np.pi * tau) * np.array([0.0, 1.0])
        pts[0] = start
        frames = FrameSet((AffineFrame(A_s, start), AffineFrame(A_g, goal)))
        demos.append(Demo(pts, frames))
    split = ",".join("train" if m % 2 == 0 else "test" for m in range(n_demos))
    meta = {"generator": "pickplace", "dt": "0.05", "position_dims": "0,1", "split": split, "seed": str(seed)}
    return Dataset(tuple(demos), meta)


# -- metrics -----------------------------------------------------------------


def resample(traj, length: int) -> np.ndarray:
    """Linear-interpolation resampling of a (T, D) trajectory to ``length`` rows."""
    x = np.atleast_2d(np.asarray(traj, dtype=float))
    if x.shape[0] == length:
        return x
    src = np.linspace(0.0, 1.0, x.shape[0])
    dst = np.linspace(0.0, 1.0, length)
    return np.column_stack([np.interp(dst, src, x[:, k]) for k in range(x.shape[1])])


def mse(traj_a, traj_b, dims=None) -> float:
    """Mean over time of the squared distance on the selected dimensions.

    Trajectories of different lengths are compared after resampling the
    shorter one linearly to the longer length. ``dims=None`` uses all columns.
    """
    a = np.atleast_2d(np.asarray(traj_a, dtype=float))
    b = np.atleast_2d(np.asarray(traj_b, dtype=float))
    if dims is None:
        dims = list(range(min(a.shape[1], b.shape[1])))
    dims = list(dims)
    if not dims:
        raise InputError("mse needs at least one dimension")
    n = max(a.shape[0], b.shape[0])
    a, b = resample(a, n)[:, dims], resample(b, n)[:, dims]
    return float(np.mean(np.sum((a - b) ** 2, axis=1)))
