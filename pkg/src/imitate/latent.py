"""Parsimonious covariance structures used as alternative EM M-steps.

Two structures are provided on top of the full covariance:

* mixture of factor analyzers, ``Sigma = L L^T + diag(psi)`` per state and frame
  (optionally isotropic noise, i.e. MPPCA);
* semi-tied covariances, ``Sigma_i = H diag(s_i) H^T`` with the basis ``H``
  shared by every state of a frame.

Both M-steps are generalized EM steps: candidate parameters are accepted only
when they do not decrease the expected complete-data log-likelihood, so the
outer EM stays monotone even when floors are active.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericError
from .gaussian import symmetrize

DEAD_WEIGHT = 1e-10


@dataclass(frozen=True, eq=False)
class MfaParams:
    loadings: np.ndarray  # (K, F, D, d)
    psi: np.ndarray  # (K, F, D)

    def covariances(self) -> np.ndarray:
        L = self.loadings
        cov = np.einsum("kfad,kfbd->kfab", L, L)
        idx = np.arange(cov.shape[-1])
        cov[..., idx, idx] += self.psi
        return symmetrize(cov)


@dataclass(frozen=True, eq=False)
class SemiTiedParams:
    basis: np.ndarray  # (F, D, D)
    diag: np.ndarray  # (K, F, D)

    def covariances(self) -> np.ndarray:
        H = self.basis
        return symmetrize(np.einsum("fad,kfd,fbd->kfab", H, self.diag, H))


def weighted_stats(resp, data):
    """Soft counts, weighted means and weighted covariances.

    ``resp`` is (N, K), ``data`` is (N, F, D). Returns ``(counts (K,),
    means (K, F, D), scatter (K, F, D, D))`` where scatter is normalized by the
    soft count of each state.
    """
    resp = np.asarray(resp, dtype=float)
    data = np.asarray(data, dtype=float)
    counts = resp.sum(axis=0)
    safe = np.where(counts > DEAD_WEIGHT, counts, 1.0)
    means = np.einsum("nk,nfd->kfd", resp, data) / safe[:, None, None]
    K, F, D = means.shape
    scatter = np.empty((K, F, D, D))
    for k in range(K):
        diff = data - means[k][None]
        scatter[k] = np.einsum("n,nfa,nfb->fab", resp[:, k], diff, diff) / safe[k]
    return counts, means, symmetrize(scatter)


def expected_loglik(count: float, scatter: np.ndarray, cov: np.ndarray) -> float:
    """``-1/2 N (log|Sigma| + tr(Sigma^-1 S))``; constant terms dropped."""
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        return -np.inf
    return -0.5 * count * (logdet + float(np.trace(np.linalg.solve(cov, scatter))))


def _floor(scatter: np.ndarray, abs_floor: float) -> float:
    return max(1e-6 * float(np.trace(scatter)) / scatter.shape[-1], abs_floor)


def _fa_init(S: np.ndarray, d: int, floor: float, mppca: bool):
    D = S.shape[0]
    evals, evecs = np.linalg.eigh(S)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    sigma2 = max(float(np.mean(evals[d:])), floor)
    L = evecs[:, :d] * np.sqrt(np.maximum(evals[:d] - sigma2, 0.0))
    if mppca:
        psi = np.full(D, sigma2)
    else:
        psi = np.maximum(np.diag(S) - np.sum(L * L, axis=1), floor)
    return L, psi


def _fa_em(S, L, psi, n_iter, floor, mppca):
    D, d = L.shape
    for _ in range(n_iter):
        cov = L @ L.T + np.diag(psi)
        beta = np.linalg.solve(cov, L).T  # (d, D) = L^T Sigma^-1
        E = np.eye(d) - beta @ L + beta @ S @ beta.T
        L = np.linalg.solve(E.T, (S @ beta.T).T).T
        resid = S - L @ beta @ S
        if mppca:
            psi = np.full(D, max(float(np.trace(resid)) / D, floor))
        else:
            psi = np.maximum(np.diag(resid), floor)
    return L, psi


def mfa_mstep(resp, data, d: int, prev=None, n_iter: int = 5, mppca: bool = False, abs_floor: float = 1e-12):
    """Weighted MFA update for every state and frame.

    ``prev`` is ``(means, MfaParams)`` from the previous iteration, or None to
    initialize from the eigendecomposition of each weighted covariance.
    Returns ``(means, MfaParams)``.
    """
    data = np.asarray(data, dtype=float)
    D = data.shape[-1]
    if not 1 <= d < D:
        raise InputError(f"latent dimension must satisfy 1 <= d < D={D}, got d={d}")
    counts, means, scatter = weighted_stats(resp, data)
    K, F = means.shape[:2]
    loadings = np.zeros((K, F, D, d))
    psi = np.zeros((K, F, D))
    for k in range(K):
        for f in range(F):
            if prev is not None and counts[k] <= DEAD_WEIGHT:
                means[k, f] = prev[0][k, f]
                loadings[k, f] = prev[1].loadings[k, f]
                psi[k, f] = prev[1].psi[k, f]
                continue
            S = scatter[k, f]
            floor = _floor(S, abs_floor)
            if prev is None:
                L0, p0 = _fa_init(S, d, floor, mppca)
            else:
                L0, p0 = prev[1].loadings[k, f], prev[1].psi[k, f]
            L, p = _fa_em(S, L0, p0, n_iter, floor, mppca)
            if prev is not None:
                new_q = expected_loglik(counts[k], S, L @ L.T + np.diag(p))
                old_q = expected_loglik(counts[k], S, L0 @ L0.T + np.diag(p0))
                if not new_q >= old_q:
                    L, p = L0, p0
            loadings[k, f] = L
            psi[k, f] = p
    return means, MfaParams(loadings, psi)


def _semitied_frame(counts, W, A, n_iter, floors):
    """Row-wise maximum-likelihood updates of ``A = H^-1`` for one frame."""
    D = W.shape[-1]
    live = counts > DEAD_WEIGHT
    total = counts[live].sum()
    for _ in range(n_iter):
        sig = np.maximum(np.einsum("rd,kde,re->kr", A, W, A), floors[:, None])
        for r in range(D):
            G = np.einsum("k,kab->ab", counts[live] / sig[live, r], W[live])
            try:
                c = np.linalg.inv(A)[:, r]
                Gi_c = np.linalg.solve(G, c)
            except np.linalg.LinAlgError as exc:
                raise NumericError("singular statistics in semi-tied update") from exc
            denom = float(c @ Gi_c)
            if not denom > 0:
                raise NumericError("singular statistics in semi-tied update")
            A[r] = Gi_c * np.sqrt(total / denom)
    sig = np.maximum(np.einsum("rd,kde,re->kr", A, W, A), floors[:, None])
    return A, sig


def semitied_mstep(resp, data, n_iter: int = 10, prev=None, abs_floor: float = 1e-12):
    """Semi-tied covariance update with a basis shared across states per frame.

    Given the basis, each state's diagonal holds its projected variances;
    given the diagonals, the rows of ``H^-1`` are updated one at a time with
    the cofactor rule, which maximizes the auxiliary likelihood row by row.
    ``prev`` is ``(means, SemiTiedParams)`` or None (basis starts at I).
    """
    data = np.asarray(data, dtype=float)
    counts, means, scatter = weighted_stats(resp, data)
    K, F, D = means.shape
    basis = np.empty((F, D, D))
    diag = np.empty((K, F, D))
    dead = counts <= DEAD_WEIGHT
    if prev is not None:
        means[dead] = prev[0][dead]
    for f in range(F):
        S = scatter[:, f]
        floors = np.array([_floor(S[k], abs_floor) for k in range(K)])
        W = S + floors[:, None, None] * np.eye(D)
        A0 = np.eye(D) if prev is None else np.linalg.inv(prev[1].basis[f])
        A, sig = _semitied_frame(counts, W, A0.copy(), n_iter, floors)
        H = np.linalg.inv(A)
        if prev is not None:
            sig[dead] = prev[1].diag[dead, f]
            new_covs = np.einsum("ad,kd,bd->kab", H, sig, H)
            old_H, old_sig = prev[1].basis[f], prev[1].diag[:, f]
            old_covs = np.einsum("ad,kd,bd->kab", old_H, old_sig, old_H)
            new_q = sum(expected_loglik(counts[k], S[k], new_covs[k]) for k in range(K) if not dead[k])
            old_q = sum(expected_loglik(counts[k], S[k], old_covs[k]) for k in range(K) if not dead[k])
            if not new_q >= old_q:
                H, sig = old_H, old_sig
        basis[f] = H
        diag[:, f] = sig
    return means, SemiTiedParams(basis, diag)


def count_parameters(structure: str, K: int, F: int, D: int, d=None) -> int:
    """Number of free parameters of a (task-parameterized) HSMM.

    Transitions count ``K**2``, priors ``K`` and durations two per state.
    For ``"mfa"`` (and ``"sva"``) ``d`` is either one latent dimension shared
    by all states or a sequence of per-state dimensions.
    """
    tail = K * K + K
    if structure == "full":
        return K * (F * (D + D * (D + 1) // 2) + 2) + tail
    if structure == "semitied":
        return F * D * D + K * (2 * F * D + 2) + tail
    if structure in ("mfa", "sva"):
        if d is None:
            raise InputError("mfa parameter count needs the latent dimension d")
        dims = [int(d)] * K if np.isscalar(d) else [int(x) for x in d]
        if len(dims) != K:
            raise InputError(f"expected {K} per-state latent dimensions, got {len(dims)}")
        return sum(F * (2 * D + D * di) + 2 for di in dims) + tail
    raise InputError(f"unknown covariance structure {structure!r}")
