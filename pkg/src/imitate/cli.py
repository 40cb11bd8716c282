"""Command-line interface.

Every subcommand is deterministic given its inputs, flags and seed. The
default seed comes from ``IMITATE_SEED`` (0 when unset). Exit codes: 0 on
success, 2 for invalid input, 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import os
import sys
import warnings
from dataclasses import dataclass

import numpy as np

from .data import (
    Dataset,
    gen_pickplace,
    gen_zshape,
    load_dataset,
    load_frames,
    load_model,
    save_dataset,
    save_model,
)
from .errors import InputError, NumericError
from .latent import count_parameters
from .markov import EMConfig, as_frame_data, fit_frames, run_lengths, viterbi_path
from .pipeline import evaluate, reproduce
from .sva import SvaHyper, default_bandwidth, sva_fit
from .task_params import adapt, project_demo


@dataclass
class RunConfig:
    seed: int = 0
    K: int = 7
    structure: str = "full"
    latent_dim: int = 1
    mppca: bool = False
    tol: float = 1e-4
    max_iter: int = 200
    r_scalar: float = 9.0
    horizon: int | None = None
    s_max: int | None = None
    lam: float = 1.0
    lam1: float = 0.1
    lam2: float = 0.1
    lam3: float = 0.1
    bandwidth: float | None = None
    sweeps: int = 5


def _env_seed() -> int:
    raw = os.environ.get("IMITATE_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise InputError(f"IMITATE_SEED must be an integer, got {raw!r}") from exc


def load_config(args) -> RunConfig:
    """Defaults, then the ``--config`` JSON file, then explicit flags."""
    cfg = RunConfig(seed=_env_seed())
    names = {f.name for f in dataclasses.fields(RunConfig)}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read {args.config}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.config}: line {exc.lineno}: {exc.msg}") from exc
        unknown = set(raw) - names
        if unknown:
            raise InputError(f"{args.config}: unknown config keys {sorted(unknown)}")
        cfg = dataclasses.replace(cfg, **raw)
    overrides = {k: v for k, v in vars(args).items() if k in names and v is not None}
    return dataclasses.replace(cfg, **overrides)


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.replace(",", " ").split()])
    except ValueError as exc:
        raise InputError(f"cannot parse vector {text!r}") from exc


def _out(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    try:
        return open(path, "w", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from exc


def _write_table(fh, header, rows):
    fh.write(" ".join(header) + "\n")
    for row in rows:
        fh.write(" ".join(v if isinstance(v, str) else repr(float(v)) if isinstance(v, float) else str(v) for v in row) + "\n")


def _select(dataset: Dataset, split: str):
    idx = dataset.split(split)
    if not idx:
        raise InputError(f"split {split!r} selects no demonstrations")
    return idx


# -- subcommands -------------------------------------------------------------


def cmd_demo(args, cfg: RunConfig) -> int:
    if args.task == "zshape":
        ds = gen_zshape(args.n_demos or 5, args.length or 200, args.noise, cfg.seed)
    else:
        ds = gen_pickplace(args.n_demos or 8, args.length or 100, cfg.seed)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} demonstrations (D={ds.D}, F={ds.F}) to {args.out}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    ds = load_dataset(args.dataset)
    idx = _select(ds, args.split)
    em = EMConfig(
        max_iter=cfg.max_iter,
        tol=cfg.tol,
        seed=cfg.seed,
        structure=cfg.structure,
        latent_dim=cfg.latent_dim,
        mppca=cfg.mppca,
        s_max=cfg.s_max,
    )
    demos = [np.stack(project_demo(ds[m].points, ds[m].frames)) for m in idx]
    model = fit_frames(demos, cfg.K, em)
    save_model(model, args.out)
    d = cfg.latent_dim if cfg.structure == "mfa" else None
    hist = np.asarray(model.ll_history)
    monotone = bool(np.all(np.diff(hist) >= -1e-8))
    print(f"structure: {cfg.structure}")
    print(f"states: {cfg.K}  frames: {ds.F}  dim: {ds.D}")
    print(f"parameters: {count_parameters(cfg.structure, cfg.K, ds.F, ds.D, d)}")
    print(f"iterations: {len(hist)}  monotone: {'yes' if monotone else 'no'}")
    print("durations: " + " ".join(f"{v:.3g}" for v in model.dur_mean))
    _write_table(sys.stdout, ["iteration", "loglik"], [(i, float(v)) for i, v in enumerate(hist)])
    return 0


def cmd_adapt(args, cfg: RunConfig) -> int:
    model = load_model(args.model)
    frames = load_frames(args.frames)
    save_model(adapt(model, frames).model, args.out)
    print(f"wrote adapted model to {args.out}")
    return 0


def cmd_generate(args, cfg: RunConfig) -> int:
    model = load_model(args.model)
    frames = load_frames(args.frames) if args.frames else None
    horizon = cfg.horizon or model.s_max
    x0 = _parse_vector(args.x0)
    rep = reproduce(model, x0, horizon, frames, args.dt, cfg.r_scalar)
    D = rep.positions.shape[1]
    with _out(args.out) as fh:
        _write_table(
            fh,
            ["t"] + [f"x{k}" for k in range(D)] + [f"u{k}" for k in range(D)],
            [[t, *map(float, rep.positions[t]), *map(float, rep.controls[t])] for t in range(horizon)],
        )
    if args.reference:
        ref = rep.reference
        with _out(args.reference) as fh:
            _write_table(
                fh,
                ["t", "state"] + [f"mu{k}" for k in range(D)] + [f"var{k}" for k in range(D)],
                [[t, int(ref.states[t]), *map(float, ref.means[t]), *map(float, np.diag(ref.covs[t]))] for t in range(horizon)],
            )
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    model = load_model(args.model)
    ds = load_dataset(args.dataset)
    splits = [s for s in args.split.split(",") if s]
    if not splits:
        raise InputError("no split selected")
    rows = []
    for name in splits:
        errs = evaluate(model, ds, _select(ds, name), cfg.r_scalar)
        rows.append((name, len(errs), float(errs.mean()), float(errs.std())))
    if args.format == "rows":
        _write_table(sys.stdout, ["split", "n", "mse_mean", "mse_std"], rows)
    else:
        print(f"{'split':<8} {'n':>3} {'mse mean':>12} {'mse std':>12}")
        for name, n, mean, std in rows:
            print(f"{name:<8} {n:>3} {mean:>12.6g} {std:>12.6g}")
    return 0


def cmd_segment(args, cfg: RunConfig) -> int:
    model = load_model(args.model)
    ds = load_dataset(args.dataset)
    rows = []
    for m in _select(ds, args.split):
        demo = ds[m]
        data = np.stack(project_demo(demo.points, demo.frames)) if model.F > 1 else as_frame_data(demo.points)
        path = viterbi_path(model, data)
        for t, z in enumerate(path):
            rows.append((m, t, int(z)))
        runs = " ".join(f"{z}x{n}" for z, n in run_lengths(path))
        print(f"# demo {m}: {runs}")
    _write_table(sys.stdout, ["demo", "t", "state"], rows)
    return 0


def _read_stream(source):
    if source in (None, "-"):
        seq = [_parse_vector(line) for line in sys.stdin if line.strip()]
        if not seq:
            raise InputError("no vectors on standard input")
        if len({v.shape[0] for v in seq}) != 1:
            raise InputError("vectors on standard input have different lengths")
        return [np.vstack(seq)]
    return [d.points for d in load_dataset(source)]


def cmd_cluster(args, cfg: RunConfig) -> int:
    seqs = _read_stream(args.source)
    b = cfg.bandwidth or default_bandwidth(np.concatenate(seqs))
    hyper = SvaHyper(cfg.lam, cfg.lam1, cfg.lam2, cfg.lam3, b)
    state, trace = sva_fit(seqs, hyper, cfg.sweeps)
    print(f"clusters: {state.K}")
    print("dims: " + " ".join(str(d) for d in state.dims))
    print(f"bandwidth: {b!r}")
    _write_table(sys.stdout, ["sweep", "loss"], [(i, float(v)) for i, v in enumerate(trace)])
    return 0


def cmd_count_params(args, cfg: RunConfig) -> int:
    d = None
    if args.d is not None:
        d = [int(v) for v in args.d.split(",")]
        d = d[0] if len(d) == 1 else d
    print(f"parameters: {count_parameters(args.structure, args.K, args.F, args.D, d)}")
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imitate", description="Learn, adapt and reproduce demonstrated motions.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with RunConfig fields")
        p.add_argument("--seed", type=int)
        return p

    p = common(sub.add_parser("demo", help="write a synthetic dataset"))
    p.add_argument("task", choices=["zshape", "pickplace"])
    p.add_argument("--out", required=True)
    p.add_argument("--n-demos", type=int)
    p.add_argument("--length", type=int)
    p.add_argument("--noise", type=float, default=0.0)
    p.set_defaults(func=cmd_demo)

    p = common(sub.add_parser("train", help="fit an HSMM to a dataset"))
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    p.add_argument("-K", "--states", dest="K", type=int)
    p.add_argument("--structure", choices=["full", "mfa", "semitied"])
    p.add_argument("--latent-dim", type=int)
    p.add_argument("--mppca", action="store_true", default=None)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--s-max", type=int)
    p.add_argument("--split", default="all")
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("adapt", help="adapt a task-parameterized model to new frames"))
    p.add_argument("model")
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_adapt)

    p = common(sub.add_parser("generate", help="decode a reference and track it"))
    p.add_argument("model")
    p.add_argument("--frames")
    p.add_argument("--x0", required=True, help="initial position, comma separated")
    p.add_argument("--horizon", type=int)
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--r-scalar", type=float)
    p.add_argument("--out", default="-")
    p.add_argument("--reference")
    p.set_defaults(func=cmd_generate)

    p = common(sub.add_parser("eval", help="reproduction MSE per split"))
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--split", default="all", help="comma separated split names")
    p.add_argument("--r-scalar", type=float)
    p.add_argument("--format", choices=["table", "rows"], default="table")
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("segment", help="dump Viterbi state sequences"))
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--split", default="all")
    p.set_defaults(func=cmd_segment)

    p = common(sub.add_parser("cluster", help="nonparametric sequence clustering"))
    p.add_argument("source", nargs="?", default="-", help="dataset file, or - for vectors on stdin")
    p.add_argument("--lam", type=float)
    p.add_argument("--lam1", type=float)
    p.add_argument("--lam2", type=float)
    p.add_argument("--lam3", type=float)
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--sweeps", type=int)
    p.set_defaults(func=cmd_cluster)

    p = common(sub.add_parser("count-params", help="free parameters of a model structure"))
    p.add_argument("--structure", required=True, choices=["full", "mfa", "semitied", "sva"])
    p.add_argument("-K", "--states", dest="K", type=int, required=True)
    p.add_argument("-F", "--frames", dest="F", type=int, default=1)
    p.add_argument("-D", "--dim", dest="D", type=int, required=True)
    p.add_argument("--d", help="latent dimension, or comma separated per-state dimensions")
    p.set_defaults(func=cmd_count_params)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args, cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
