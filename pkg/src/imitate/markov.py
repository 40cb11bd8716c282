"""Hidden (semi-)Markov model learning, filtering and decoding.

Training is Baum-Welch EM on Gaussian emissions (optionally one Gaussian per
coordinate frame, multiplied together). Durations are estimated afterwards
from Viterbi run lengths, and the explicit-duration forward variable is used
to decode a step-wise reference for tracking.
"""
from __future__ import annotations

import dataclasses
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .errors import InputError, NumericError
from .gaussian import Gaussian, data_floor, kmeans, log_density_many, regularize
from .latent import (
    DEAD_WEIGHT,
    MfaParams,
    SemiTiedParams,
    expected_loglik,
    mfa_mstep,
    semitied_mstep,
    weighted_stats,
)

logger = logging.getLogger(__name__)

STRUCTURES = ("full", "mfa", "semitied")
DURATION_VAR_FLOOR = 1.0
TRANS_SMOOTHING = 1e-6
ABSORB_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class HsmmModel:
    """Parameters of a (task-parameterized) HSMM.

    ``means`` is (K, F, D) and ``covs`` (K, F, D, D); F = 1 for a plain model.
    ``dur_mean``/``dur_var`` hold the Gaussian duration model in time steps.
    Structure-specific factors are kept alongside the reconstructed
    covariances: ``loadings``/``psi`` for ``"mfa"``, ``basis``/``diag`` for
    ``"semitied"``.
    """

    priors: np.ndarray
    trans: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    dur_mean: np.ndarray
    dur_var: np.ndarray
    s_max: int
    structure: str = "full"
    latent_dim: int = 0
    mppca: bool = False
    loadings: np.ndarray | None = None
    psi: np.ndarray | None = None
    basis: np.ndarray | None = None
    diag: np.ndarray | None = None
    trans_mask: np.ndarray | None = None
    ll_history: tuple = field(default_factory=tuple)

    def __post_init__(self):
        priors = np.asarray(self.priors, dtype=float)
        trans = np.asarray(self.trans, dtype=float)
        means = np.asarray(self.means, dtype=float)
        covs = np.asarray(self.covs, dtype=float)
        if means.ndim == 2:
            means = means[:, None, :]
        if covs.ndim == 3:
            covs = covs[:, None, :, :]
        K, F, D = means.shape
        if priors.shape != (K,) or trans.shape != (K, K) or covs.shape != (K, F, D, D):
            raise InputError("inconsistent HSMM parameter shapes")
        if abs(priors.sum() - 1.0) > 1e-9 or np.any(np.abs(trans.sum(axis=1) - 1.0) > 1e-9):
            raise InputError("priors and transition rows must sum to one")
        if self.structure not in STRUCTURES:
            raise InputError(f"unknown structure {self.structure!r}")
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "trans", trans)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "dur_mean", np.asarray(self.dur_mean, dtype=float).reshape(K))
        object.__setattr__(self, "dur_var", np.asarray(self.dur_var, dtype=float).reshape(K))
        object.__setattr__(self, "s_max", int(self.s_max))
        object.__setattr__(self, "ll_history", tuple(float(v) for v in self.ll_history))

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def F(self) -> int:
        return self.means.shape[1]

    @property
    def D(self) -> int:
        return self.means.shape[2]

    def emission(self, i: int, frame: int = 0) -> Gaussian:
        return Gaussian(self.means[i, frame], self.covs[i, frame])

    def replace(self, **changes) -> "HsmmModel":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, eq=False)
class PosteriorStats:
    """E-step quantities for one sequence.

    ``log_alpha``/``log_beta`` are the unscaled forward/backward variables in
    log space, ``gamma`` (T, K) and ``zeta`` (T-1, K, K) the smoothed node and
    edge marginals.
    """

    log_alpha: np.ndarray
    log_beta: np.ndarray
    gamma: np.ndarray
    zeta: np.ndarray
    log_likelihood: float


@dataclass(frozen=True, eq=False)
class ReferenceTrajectory:
    """Step-wise sequence of Gaussian targets and the states that produced them."""

    means: np.ndarray  # (T, D)
    covs: np.ndarray  # (T, D, D)
    states: np.ndarray  # (T,)

    def __len__(self) -> int:
        return self.means.shape[0]

    @property
    def steps(self):
        return [(self.means[t], self.covs[t], int(self.states[t])) for t in range(len(self))]


@dataclass(frozen=True)
class EMConfig:
    max_iter: int = 200
    tol: float = 1e-4
    seed: int = 0
    structure: str = "full"
    latent_dim: int = 1
    mppca: bool = False
    mfa_iters: int = 5
    semitied_iters: int = 10
    s_max: int | None = None
    trans_mask: np.ndarray | None = None


# -- emissions ---------------------------------------------------------------


def as_frame_data(demo, F: int = 1) -> np.ndarray:
    """Normalize one demonstration to the (F, T, D) layout."""
    x = np.asarray(demo, dtype=float)
    if x.ndim == 2 and F == 1:
        return x[None]
    if x.ndim == 3 and x.shape[0] == F:
        return x
    raise InputError(f"demonstration of shape {x.shape} does not match a model with F={F} frames")


def emission_loglik(model: HsmmModel, frame_data) -> np.ndarray:
    """(T, K) log emission likelihoods; products over frames become sums."""
    X = as_frame_data(frame_data, model.F)
    if X.shape[2] != model.D:
        raise InputError(f"observation dimension {X.shape[2]} != model dimension {model.D}")
    out = np.zeros((X.shape[1], model.K))
    for i in range(model.K):
        for j in range(model.F):
            out[:, i] += log_density_many(X[j], model.means[i, j], model.covs[i, j])
    return out


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


# -- HMM inference -----------------------------------------------------------


def _posteriors(priors, trans, log_b) -> PosteriorStats:
    alpha, beta, log_c, fail = _kernels.forward_backward(priors, trans, log_b)
    if fail >= 0:
        worst = int(np.argmax(log_b[fail]))
        raise NumericError(
            f"zero-probability observation at t={fail} (best state {worst}, "
            f"log emission {log_b[fail, worst]:.3g})"
        )
    cum = np.cumsum(log_c)
    log_alpha = _log(alpha) + cum[:, None]
    log_beta = _log(beta) + (cum[-1] - cum)[:, None]
    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    T = log_b.shape[0]
    if T > 1:
        m = log_b.max(axis=1)
        bs = np.exp(log_b[1:] - m[1:, None]) * beta[1:]
        zeta = alpha[:-1, :, None] * trans[None] * bs[:, None, :]
        zeta /= zeta.sum(axis=(1, 2), keepdims=True)
    else:
        zeta = np.zeros((0, trans.shape[0], trans.shape[0]))
    return PosteriorStats(log_alpha, log_beta, gamma, zeta, float(cum[-1]))


def forward_backward(model: HsmmModel, demo, frames=None) -> PosteriorStats:
    """Forward-backward pass for one demonstration.

    ``demo`` is (T, D); for task-parameterized models pass the demonstration's
    ``frames`` (a FrameSet) or an already projected (F, T, D) array.
    """
    return _posteriors(model.priors, model.trans, emission_loglik(model, _framed(model, demo, frames)))


def _framed(model, demo, frames):
    if frames is not None:
        from .task_params import project_demo

        return np.stack(project_demo(demo, frames))
    return as_frame_data(demo, model.F)


def filter_state(model: HsmmModel, obs_history, frames=None) -> np.ndarray:
    """P(z_t = i | x_1..x_t): the normalized forward variable at the last step."""
    x = np.asarray(obs_history, dtype=float)
    if x.ndim == 1:
        x = x[None]
    if x.shape[0] < 1:
        raise InputError("filtering needs at least one observation")
    log_b = emission_loglik(model, _framed(model, x, frames))
    alpha, _, _, fail = _kernels.forward_backward(model.priors, model.trans, log_b)
    if fail >= 0:
        raise NumericError(f"zero-probability observation at t={fail}")
    return alpha[-1].copy()


def viterbi_path(model: HsmmModel, frame_data) -> np.ndarray:
    log_b = emission_loglik(model, frame_data)
    path, _ = _kernels.viterbi(_log(model.priors), _log(model.trans), log_b)
    return path


# -- EM ----------------------------------------------------------------------


def _smoothed_trans(num, den, mask):
    K = num.shape[0]
    allowed = np.ones((K, K), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    ml = np.where(den[:, None] > DEAD_WEIGHT, num / np.where(den > DEAD_WEIGHT, den, 1.0)[:, None], 0.0)
    a = np.where(allowed, ml + TRANS_SMOOTHING, 0.0)
    return a / a.sum(axis=1, keepdims=True)


def _trans_q(num, a):
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(num > 0, num * _log(a), 0.0)
    return float(terms.sum())


def _mstep_trans(num, den, old, mask):
    new = _smoothed_trans(num, den, mask)
    dead = den <= DEAD_WEIGHT
    new[dead] = old[dead]
    if _trans_q(num, new) >= _trans_q(num, old):
        return new
    return old


def _full_mstep(resp, X, prev_means, prev_covs, abs_floor):
    counts, means, scatter = weighted_stats(resp, X)
    K, F = means.shape[:2]
    covs = np.empty_like(scatter)
    for k in range(K):
        if prev_covs is not None and counts[k] <= DEAD_WEIGHT:
            means[k], covs[k] = prev_means[k], prev_covs[k]
            continue
        for f in range(F):
            cand = regularize(scatter[k, f], abs_floor)
            if prev_covs is not None:
                old = prev_covs[k, f]
                if expected_loglik(counts[k], scatter[k, f], cand) < expected_loglik(counts[k], scatter[k, f], old):
                    cand = old
            covs[k, f] = cand
    return means, covs


def _emission_mstep(resp, X, cfg: EMConfig, prev, abs_floor):
    """Returns a dict of emission fields for :class:`HsmmModel`."""
    if cfg.structure == "full":
        means, covs = _full_mstep(
            resp, X, None if prev is None else prev.means, None if prev is None else prev.covs, abs_floor
        )
        return dict(means=means, covs=covs)
    if cfg.structure == "mfa":
        p = None if prev is None else (prev.means, MfaParams(prev.loadings, prev.psi))
        means, params = mfa_mstep(resp, X, cfg.latent_dim, prev=p, n_iter=cfg.mfa_iters, mppca=cfg.mppca, abs_floor=abs_floor)
        return dict(means=means, covs=params.covariances(), loadings=params.loadings, psi=params.psi)
    p = None if prev is None else (prev.means, SemiTiedParams(prev.basis, prev.diag))
    means, params = semitied_mstep(resp, X, n_iter=cfg.semitied_iters, prev=p, abs_floor=abs_floor)
    return dict(means=means, covs=params.covariances(), basis=params.basis, diag=params.diag)


def fit_frames(frame_demos, K: int, config: EMConfig | None = None) -> HsmmModel:
    """EM on demonstrations already laid out as (F, T, D) arrays."""
    cfg = config or EMConfig()
    if cfg.structure not in STRUCTURES:
        raise InputError(f"unknown structure {cfg.structure!r}")
    demos = [np.asarray(d, dtype=float) for d in frame_demos]
    if not demos:
        raise InputError("dataset is empty")
    if K < 1:
        raise InputError(f"K must be at least 1, got {K}")
    F, _, D = demos[0].shape
    if any(d.ndim != 3 or d.shape[0] != F or d.shape[2] != D for d in demos):
        raise InputError("all demonstrations must share frame count and dimension")
    X = np.concatenate([d.transpose(1, 0, 2) for d in demos], axis=0)  # (N, F, D)
    N = X.shape[0]
    if K > N:
        raise InputError(f"K={K} exceeds the number of datapoints ({N})")
    if cfg.structure == "mfa" and not 1 <= cfg.latent_dim < D:
        raise InputError(f"latent dimension must satisfy 1 <= d < D={D}")
    mask = None if cfg.trans_mask is None else np.asarray(cfg.trans_mask, dtype=bool)
    if mask is not None and (mask.shape != (K, K) or not mask.any(axis=1).all()):
        raise InputError("transition mask must be KxK with at least one allowed entry per row")
    abs_floor = data_floor(X.reshape(N, F * D))
    lengths = [d.shape[1] for d in demos]
    s_max = cfg.s_max or max(lengths)

    labels, _ = kmeans(X.reshape(N, F * D), K, cfg.seed)
    hard = np.eye(K)[labels]
    priors = np.bincount(labels, minlength=K) / N
    counts = np.zeros((K, K))
    offset = 0
    for T in lengths:
        seq = labels[offset:offset + T]
        np.add.at(counts, (seq[:-1], seq[1:]), 1.0)
        offset += T
    trans = _smoothed_trans(counts, counts.sum(axis=1), mask)
    model = HsmmModel(
        priors=priors,
        trans=trans,
        dur_mean=np.ones(K),
        dur_var=np.full(K, DURATION_VAR_FLOOR),
        s_max=s_max,
        structure=cfg.structure,
        latent_dim=cfg.latent_dim if cfg.structure == "mfa" else 0,
        mppca=cfg.mppca,
        trans_mask=mask,
        **_emission_mstep(hard, X, cfg, None, abs_floor),
    )

    history = []
    for it in range(cfg.max_iter):
        gammas, num, den, start = [], np.zeros((K, K)), np.zeros(K), np.zeros(K)
        total = 0.0
        for d in demos:
            st = _posteriors(model.priors, model.trans, emission_loglik(model, d))
            total += st.log_likelihood
            gammas.append(st.gamma)
            num += st.zeta.sum(axis=0)
            den += st.gamma[:-1].sum(axis=0)
            start += st.gamma[0]
        history.append(total)
        logger.debug("EM iteration %d: log-likelihood %.10g", it, total)
        if it > 0 and total - history[-2] < cfg.tol:
            break
        if it == cfg.max_iter - 1:
            break
        resp = np.concatenate(gammas, axis=0)
        model = model.replace(
            priors=start / len(demos),
            trans=_mstep_trans(num, den, model.trans, mask),
            **_emission_mstep(resp, X, cfg, model, abs_floor),
        )
    model = model.replace(ll_history=tuple(history))
    return _estimate_durations(model, demos)


def em_fit(dataset, K: int, config: EMConfig | None = None) -> HsmmModel:
    """Fit an HSMM to a list of (T, D) demonstrations."""
    demos = [as_frame_data(d) for d in dataset]
    return fit_frames(demos, K, config)


# -- durations ---------------------------------------------------------------


def run_lengths(seq):
    """Run-length encoding: list of (state, length)."""
    seq = np.asarray(seq)
    if seq.size == 0:
        return []
    change = np.flatnonzero(np.diff(seq)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [seq.size]])
    return [(int(seq[s]), int(e - s)) for s, e in zip(starts, ends)]


def durations_from_sequences(sequences, K: int):
    """Mean and floored variance of run lengths per state."""
    runs = [[] for _ in range(K)]
    for seq in sequences:
        for state, length in run_lengths(seq):
            runs[state].append(length)
    mu = np.ones(K)
    var = np.full(K, DURATION_VAR_FLOOR)
    for k in range(K):
        if not runs[k]:
            warnings.warn(f"state {k} never visited by the decoded sequences; duration set to 1", RuntimeWarning)
            continue
        r = np.asarray(runs[k], dtype=float)
        mu[k] = r.mean()
        var[k] = max(r.var(), DURATION_VAR_FLOOR)
    return mu, var


def _estimate_durations(model, frame_demos):
    paths = [viterbi_path(model, d) for d in frame_demos]
    mu, var = durations_from_sequences(paths, model.K)
    return model.replace(dur_mean=mu, dur_var=var)


def estimate_durations(model: HsmmModel, dataset, frames=None) -> HsmmModel:
    """Duration model from the run lengths of per-demo Viterbi paths.

    ``frames`` is an optional list of FrameSets (one per demo) for
    task-parameterized models.
    """
    if frames is None:
        demos = [as_frame_data(d, model.F) for d in dataset]
    else:
        demos = [_framed(model, d, f) for d, f in zip(dataset, frames)]
    return _estimate_durations(model, demos)


# -- HSMM forward variable ---------------------------------------------------


def hsmm_transitions(model: HsmmModel) -> np.ndarray:
    """Transition matrix with self-transitions replaced by the duration model.

    The diagonal is removed and rows renormalized. States that (almost) never
    leave, i.e. off-diagonal mass below ``ABSORB_TOL``, stay absorbing.
    """
    a = model.trans.copy()
    K = a.shape[0]
    np.fill_diagonal(a, 0.0)
    off = a.sum(axis=1)
    out = np.zeros_like(a)
    for i in range(K):
        if off[i] < ABSORB_TOL:
            out[i, i] = 1.0
        else:
            out[i] = a[i] / off[i]
    return out


def duration_tables(dur_mean, dur_var, s_max: int):
    """Per-state log duration density and log survival for s = 1..s_max."""
    s = np.arange(1, s_max + 1, dtype=float)
    mu = np.asarray(dur_mean, dtype=float)[:, None]
    var = np.asarray(dur_var, dtype=float)[:, None]
    log_pd = -0.5 * np.log(2 * np.pi * var) - 0.5 * (s[None, :] - mu) ** 2 / var
    rev = np.logaddexp.accumulate(log_pd[:, ::-1], axis=1)[:, ::-1]
    return log_pd, rev


def hsmm_messages_for(model: HsmmModel, log_b: np.ndarray, trans: np.ndarray | None = None):
    """Segment-end and occupancy log forward variables for given emissions."""
    a = hsmm_transitions(model) if trans is None else trans
    log_pd, log_surv = duration_tables(model.dur_mean, model.dur_var, model.s_max)
    return _kernels.hsmm_messages(_log(model.priors), _log(a), log_pd, log_surv, log_b)


def _prediction_loglik(model, obs_prefix, horizon, frames):
    x = np.asarray(obs_prefix, dtype=float)
    if x.ndim == 1:
        x = x[None]
    if x.shape[0] < 1 or horizon < 1:
        raise InputError("need at least one observation and a positive horizon")
    obs = emission_loglik(model, _framed(model, x, frames))
    log_b = np.zeros((horizon, model.K))
    n = min(horizon, obs.shape[0])
    log_b[:n] = obs[:n]
    return log_b


def hsmm_forward(model: HsmmModel, obs_prefix, horizon: int, frames=None) -> np.ndarray:
    """Rescaled duration-aware forward variable over ``horizon`` steps.

    Observations are used for the prefix only; afterwards emissions are
    treated as 1 and only transitions and durations drive the prediction.
    Row ``t`` is proportional to P(z_t = i, x_1..x_min(t, t0)) and sums to one.
    """
    log_b = _prediction_loglik(model, obs_prefix, horizon, frames)
    _, occ = hsmm_messages_for(model, log_b)
    return np.exp(occ - logsumexp(occ, axis=1, keepdims=True))


def decode_reference(model: HsmmModel, initial_obs, horizon: int) -> ReferenceTrajectory:
    """Most likely state per step and the matching emission Gaussians.

    The model must have a single (global or adapted) frame.
    """
    if model.F != 1:
        raise InputError("decode_reference needs a single-frame model; adapt it to a FrameSet first")
    h = hsmm_forward(model, initial_obs, horizon)
    states = np.argmax(h, axis=1)
    return ReferenceTrajectory(model.means[states, 0].copy(), model.covs[states, 0].copy(), states)


def sample_states_stochastic(model: HsmmModel, horizon: int, rng_seed: int = 0, start_state: int | None = None) -> np.ndarray:
    """Sample a state sequence: duration from the duration Gaussian, then a transition."""
    if horizon < 1:
        raise InputError("horizon must be positive")
    rng = np.random.default_rng(rng_seed)
    a = hsmm_transitions(model)
    state = int(rng.choice(model.K, p=model.priors)) if start_state is None else int(start_state)
    out = []
    while len(out) < horizon:
        dur = rng.normal(model.dur_mean[state], np.sqrt(model.dur_var[state]))
        dur = int(np.clip(np.rint(dur), 1, model.s_max))
        out.extend([state] * dur)
        state = int(rng.choice(model.K, p=a[state]))
    return np.asarray(out[:horizon], dtype=np.int64)
