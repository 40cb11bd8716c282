"""Online nonparametric sequence clustering under small-variance asymptotics.

Each cluster is an affine subspace (mean plus an orthonormal basis of
dimension ``d_i``). The loss penalizes new clusters (``lam``), subspace
dimensions (``lam1``), unlikely transitions (``lam2``) and new transitions
(``lam3``)::

    sum_t dist(x_t, z_t)^2 + lam (K - 1) + lam1 sum_i d_i
        - lam2 sum_t log a[z_t, z_t+1] + lam3 sum_i max(tau_i - 1, 0)

where ``tau_i`` is the number of distinct transitions out of state ``i``.
Points are streamed through :func:`sva_observe`; :func:`sva_sweep` re-assigns
a stored stream and never increases the loss.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .gaussian import symmetrize
from .markov import TRANS_SMOOTHING, HsmmModel, durations_from_sequences


@dataclass(frozen=True)
class SvaHyper:
    lam: float = 1.0
    lam1: float = 0.1
    lam2: float = 0.1
    lam3: float = 0.1
    bandwidth: float = 1.0
    sigma: float = 0.1  # residual scale of the limit; only used by to_hsmm defaults

    def __post_init__(self):
        if min(self.lam, self.lam1, self.lam2, self.lam3) < 0:
            raise InputError("SVA penalties must be non-negative")
        if not self.bandwidth > 0:
            raise InputError("bandwidth must be positive")


@dataclass(eq=False)
class Cluster:
    mean: np.ndarray
    basis: np.ndarray  # (D, d), orthonormal columns
    count: int = 0
    scatter: np.ndarray | None = None

    def __post_init__(self):
        D = self.mean.shape[0]
        if self.scatter is None:
            self.scatter = np.zeros((D, D))

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


@dataclass(eq=False)
class SvaState:
    """Mutable streaming state; take snapshots with :meth:`copy`."""

    clusters: list = field(default_factory=list)
    transition_counts: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.int64))
    last_state: int | None = None
    assignments: list = field(default_factory=list)
    seq_starts: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.clusters)

    @property
    def tau(self) -> np.ndarray:
        return np.count_nonzero(self.transition_counts, axis=1)

    @property
    def dims(self) -> list:
        return [c.dim for c in self.clusters]

    def copy(self) -> "SvaState":
        return copy.deepcopy(self)

    def start_sequence(self) -> None:
        """Mark the next observation as the first of a new sequence."""
        self.last_state = None

    def _add_cluster(self, x: np.ndarray) -> int:
        D = x.shape[0]
        self.clusters.append(Cluster(x.copy(), np.zeros((D, 0))))
        K = self.K
        grown = np.zeros((K, K), dtype=np.int64)
        grown[: K - 1, : K - 1] = self.transition_counts
        self.transition_counts = grown
        return K - 1


def default_bandwidth(data, prefix: int = 100) -> float:
    """Twice the median pairwise squared distance of the first ``prefix`` points."""
    X = np.atleast_2d(np.asarray(data, dtype=float))[:prefix]
    if X.shape[0] < 2:
        return 1.0
    d2 = np.sum((X[:, None] - X[None]) ** 2, axis=2)
    med = float(np.median(d2[np.triu_indices(X.shape[0], 1)]))
    return 2.0 * med if med > 0 else 1.0


def subspace_distance(x, cluster, bandwidth: float) -> float:
    """Distance to a cluster subspace, projection weighted by ``exp(-|x-mu|^2 / b)``."""
    x = np.asarray(x, dtype=float)
    r = x - cluster.mean
    sq = float(r @ r)
    if cluster.basis.shape[1] == 0:
        return math.sqrt(sq)
    rho = math.exp(-sq / bandwidth)
    resid = r - rho * (cluster.basis @ (cluster.basis.T @ r))
    return float(np.linalg.norm(resid))


def _sq_dist_many(X, mean, basis, bandwidth):
    R = X - mean
    sq = np.sum(R * R, axis=1)
    if basis.shape[1] == 0:
        return sq
    rho = np.exp(-sq / bandwidth)
    proj = (R @ basis) @ basis.T
    resid = R - rho[:, None] * proj
    return np.sum(resid * resid, axis=1)


def _row_loss(row, hyper: SvaHyper) -> float:
    total = row.sum()
    if total == 0:
        return 0.0
    nz = row[row > 0].astype(float)
    loglik = float(np.sum(nz * np.log(nz / total)))
    return -hyper.lam2 * loglik + hyper.lam3 * max(nz.size - 1, 0)


def _transition_pairs(assignments, seq_starts):
    starts = set(seq_starts)
    return [(assignments[t - 1], assignments[t]) for t in range(1, len(assignments)) if t not in starts]


def sva_loss(state: SvaState, data, hyper: SvaHyper) -> float:
    """Loss of the current assignments, means, bases and transition counts."""
    X = np.atleast_2d(np.asarray(data, dtype=float))
    z = np.asarray(state.assignments, dtype=np.int64)
    if z.shape[0] != X.shape[0]:
        raise InputError(f"{z.shape[0]} assignments for {X.shape[0]} datapoints")
    total = 0.0
    for i, c in enumerate(state.clusters):
        pts = X[z == i]
        if pts.shape[0]:
            total += float(_sq_dist_many(pts, c.mean, c.basis, hyper.bandwidth).sum())
    K = state.K
    total += hyper.lam * max(K - 1, 0) + hyper.lam1 * sum(state.dims)
    for i in range(K):
        total += _row_loss(state.transition_counts[i], hyper)
    return total


def _refresh_basis(c: Cluster, hyper: SvaHyper, D: int) -> None:
    evals, evecs = np.linalg.eigh(symmetrize(c.scatter))
    evals, evecs = evals[::-1], evecs[:, ::-1]
    d = c.dim
    if d < D - 1 and evals[d] > hyper.lam1:
        d += 1
    c.basis = evecs[:, :d].copy()


def sva_observe(state: SvaState, x, hyper: SvaHyper) -> SvaState:
    """Assign one observation, growing clusters, transitions and subspaces as needed."""
    x = np.asarray(x, dtype=float)
    last = state.last_state
    if last is None:
        state.seq_starts.append(len(state.assignments))
    if state.K == 0:
        z = state._add_cluster(x)
    else:
        if last is None:
            trans_cost = np.zeros(state.K)
            spawn = hyper.lam
        else:
            row = state.transition_counts[last]
            n = row.sum()
            a_hat = (row + 1.0) / (n + 1.0)
            new_edge = (row == 0) & (np.count_nonzero(row) >= 1)
            trans_cost = -hyper.lam2 * np.log(a_hat) + hyper.lam3 * new_edge
            spawn = hyper.lam - hyper.lam2 * math.log(1.0 / (n + 1.0)) + hyper.lam3 * (np.count_nonzero(row) >= 1)
        costs = np.array(
            [subspace_distance(x, c, hyper.bandwidth) ** 2 for c in state.clusters]
        ) + trans_cost
        best = int(np.argmin(costs))
        z = state._add_cluster(x) if spawn < costs[best] else best
    c = state.clusters[z]
    c.count += 1
    delta = x - c.mean
    c.mean = c.mean + delta / c.count
    c.scatter = c.scatter + np.outer(delta, x - c.mean)
    if c.count >= 2 and (c.count & (c.count - 1)) == 0:
        _refresh_basis(c, hyper, x.shape[0])
    if last is not None:
        state.transition_counts[last, z] += 1
    state.last_state = z
    state.assignments.append(z)
    return state


def _cluster_cost(pts, mean, basis, hyper):
    return float(_sq_dist_many(pts, mean, basis, hyper.bandwidth).sum()) + hyper.lam1 * basis.shape[1]


def _best_subspace(pts, hyper, D):
    mean = pts.mean(axis=0)
    R = pts - mean
    scatter = R.T @ R
    evals, evecs = np.linalg.eigh(symmetrize(scatter))
    evecs = evecs[:, ::-1]
    best = None
    for d in range(D):
        basis = evecs[:, :d].copy()
        cost = _cluster_cost(pts, mean, basis, hyper)
        if best is None or cost < best[0]:
            best = (cost, mean, basis, scatter)
    return best


def sva_sweep(state: SvaState, data, hyper: SvaHyper) -> float:
    """One batch pass: greedy re-assignment, then per-cluster updates.

    Every move is chosen to minimize the total loss with the other
    assignments fixed, and cluster updates are kept only when they do not
    increase the cluster's share of the loss. Returns the loss afterwards.
    """
    X = np.atleast_2d(np.asarray(data, dtype=float))
    z = state.assignments
    if len(z) != X.shape[0]:
        raise InputError(f"{len(z)} assignments for {X.shape[0]} datapoints")
    starts = set(state.seq_starts)
    N = X.shape[0]
    for t in range(N):
        cur = z[t]
        prev = z[t - 1] if t > 0 and t not in starts else None
        nxt = z[t + 1] if t + 1 < N and (t + 1) not in starts else None
        K = state.K
        counts = state.transition_counts
        d2 = np.array([_sq_dist_many(X[t:t + 1], c.mean, c.basis, hyper.bandwidth)[0] for c in state.clusters])

        def trans_delta(target, extra_row=False):
            rows = {r for r in (prev, cur, target) if r is not None and r < K}
            before = sum(_row_loss(counts[r], hyper) for r in rows)
            width = K + 1 if extra_row else K
            mod = {r: np.concatenate([counts[r], [0]]) if extra_row else counts[r].copy() for r in rows}
            if extra_row:
                mod[target] = np.zeros(width, dtype=np.int64)
            if prev is not None:
                mod[prev][cur] -= 1
                mod[prev][target] += 1
            if nxt is not None:
                mod[cur][nxt] -= 1
                mod[target][nxt] += 1
            return sum(_row_loss(r, hyper) for r in mod.values()) - before

        totals = np.array([d2[k] + trans_delta(k) for k in range(K)])
        best = int(np.argmin(totals))
        spawn_total = hyper.lam + trans_delta(K, extra_row=True)
        if spawn_total < totals[best]:
            state._add_cluster(X[t])
            best = K
        if best != cur:
            if prev is not None:
                state.transition_counts[prev, cur] -= 1
                state.transition_counts[prev, best] += 1
            if nxt is not None:
                state.transition_counts[cur, nxt] -= 1
                state.transition_counts[best, nxt] += 1
            z[t] = best

    D = X.shape[1]
    za = np.asarray(z)
    for i, c in enumerate(state.clusters):
        pts = X[za == i]
        c.count = int(pts.shape[0])
        if not c.count:
            continue
        current = _cluster_cost(pts, c.mean, c.basis, hyper)
        cost, mean, basis, scatter = _best_subspace(pts, hyper, D)
        if cost <= current:
            c.mean, c.basis = mean, basis
        c.scatter = scatter
    state.last_state = z[-1] if z else None
    return sva_loss(state, X, hyper)


def sva_fit(sequences, hyper: SvaHyper, n_sweeps: int = 5):
    """Stream every sequence through the state, then run batch sweeps.

    Returns ``(state, loss_trace)`` where the trace holds the loss after the
    streaming pass followed by the loss after each sweep.
    """
    seqs = [np.atleast_2d(np.asarray(s, dtype=float)) for s in sequences]
    if not seqs:
        raise InputError("no data to cluster")
    state = SvaState()
    for s in seqs:
        state.start_sequence()
        for x in s:
            sva_observe(state, x, hyper)
    X = np.concatenate(seqs, axis=0)
    trace = [sva_loss(state, X, hyper)]
    for _ in range(n_sweeps):
        trace.append(sva_sweep(state, X, hyper))
        if trace[-1] == trace[-2]:
            break
    return state, trace


def to_hsmm(state: SvaState, data, sigma2: float = 1e-2, s_max: int | None = None) -> HsmmModel:
    """Convert a clustering into an HSMM so decoding and tracking apply.

    Covariances are ``U diag(s) U^T + sigma2 I`` with ``s`` the retained
    scatter eigenvalues per point; transitions and the prior come from the
    counts and the duration model from the run lengths of the assignments.
    """
    X = np.atleast_2d(np.asarray(data, dtype=float))
    K, D = state.K, X.shape[1]
    z = np.asarray(state.assignments)
    means = np.empty((K, D))
    covs = np.empty((K, D, D))
    for i, c in enumerate(state.clusters):
        pts = X[z == i]
        means[i] = c.mean
        cov = sigma2 * np.eye(D)
        if c.dim and pts.shape[0]:
            R = pts - c.mean
            s = np.sum((R @ c.basis) ** 2, axis=0) / pts.shape[0]
            cov = cov + (c.basis * s) @ c.basis.T
        covs[i] = symmetrize(cov)
    counts = state.transition_counts.astype(float)
    trans = np.empty((K, K))
    for i in range(K):
        if counts[i].sum() == 0:
            trans[i] = np.eye(K)[i]
        else:
            row = counts[i] / counts[i].sum() + TRANS_SMOOTHING
            trans[i] = row / row.sum()
    firsts = np.bincount([state.assignments[s] for s in state.seq_starts], minlength=K).astype(float)
    priors = firsts / firsts.sum() + TRANS_SMOOTHING
    priors /= priors.sum()
    bounds = list(state.seq_starts) + [len(z)]
    seqs = [z[a:b] for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    mu, var = durations_from_sequences(seqs, K)
    return HsmmModel(
        priors=priors,
        trans=trans,
        means=means,
        covs=covs,
        dur_mean=mu,
        dur_var=var,
        s_max=s_max or max(len(s) for s in seqs),
    )
