"""Gaussian primitives: log densities, affine transforms, products, k-means.

All densities are evaluated in log space. Covariances produced by learning
routines are regularized with :func:`regularize`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky

from .errors import InputError, NumericError

LOG_2PI = math.log(2.0 * math.pi)
REG_RELATIVE = 1e-6
SYMMETRY_RTOL = 1e-9


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def regularize(cov: np.ndarray, min_eps: float = 0.0) -> np.ndarray:
    """Add ``eps * I`` with ``eps = 1e-6 * trace(cov) / D`` (at least ``min_eps``)."""
    cov = symmetrize(np.asarray(cov, dtype=float))
    dim = cov.shape[-1]
    eps = max(REG_RELATIVE * float(np.trace(cov)) / dim, min_eps)
    return cov + eps * np.eye(dim)


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Multivariate normal with mean ``mean`` (D,) and covariance ``cov`` (D, D)."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1:
            raise InputError(f"mean must be a vector, got shape {mean.shape}")
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise InputError(f"covariance shape {cov.shape} does not match mean dimension {d}")
        scale = max(float(np.max(np.abs(cov))), 1e-300)
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_RTOL * scale:
            raise InputError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def precision(self) -> np.ndarray:
        return _inv_pd(self.cov)

    def allclose(self, other: "Gaussian", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.mean, other.mean, rtol=0, atol=atol)
            and np.allclose(self.cov, other.cov, rtol=0, atol=atol)
        )


@dataclass(frozen=True, eq=False)
class AffineFrame:
    """Coordinate system ``x_global = A @ x_local + b``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        d = b.shape[0]
        if A.shape != (d, d):
            raise InputError(f"frame matrix shape {A.shape} does not match offset dimension {d}")
        if abs(np.linalg.det(A)) <= 1e-12:
            raise InputError("frame matrix is singular (|det A| <= 1e-12)")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "AffineFrame":
        return cls(np.eye(dim), np.zeros(dim))

    def inverse(self) -> "AffineFrame":
        A_inv = np.linalg.inv(self.A)
        return AffineFrame(A_inv, -A_inv @ self.b)


def _cholesky(cov: np.ndarray) -> np.ndarray:
    try:
        return cholesky(cov, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericError("covariance is not positive definite") from exc


def _inv_pd(cov: np.ndarray) -> np.ndarray:
    L = _cholesky(cov)
    return symmetrize(cho_solve((L, True), np.eye(cov.shape[0])))


def log_density_many(X: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Row-wise ``log N(X[n] | mean, cov)`` for an (N, D) array."""
    X = np.atleast_2d(X)
    if X.shape[1] != mean.shape[0]:
        raise InputError(f"observation dimension {X.shape[1]} != model dimension {mean.shape[0]}")
    L = _cholesky(cov)
    z = np.linalg.solve(L, (X - mean).T)
    log_det = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * (mean.shape[0] * LOG_2PI + log_det + np.sum(z * z, axis=0))


def log_density(x, g: Gaussian) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != g.mean.shape:
        raise InputError(f"observation shape {x.shape} != mean shape {g.mean.shape}")
    return float(log_density_many(x[None, :], g.mean, g.cov)[0])


def transform(g: Gaussian, f: AffineFrame) -> Gaussian:
    """Push ``g`` through ``x -> A x + b``."""
    if f.dim != g.dim:
        raise InputError(f"frame dimension {f.dim} != Gaussian dimension {g.dim}")
    return Gaussian(f.A @ g.mean + f.b, symmetrize(f.A @ g.cov @ f.A.T))


def product_of_gaussians(factors) -> Gaussian:
    """Normalized product of Gaussian densities (precision-weighted fusion).

    No regularization is applied: the sum of positive-definite precisions is
    already positive definite, and the result precision must equal that sum.
    """
    factors = list(factors)
    if not factors:
        raise InputError("product of Gaussians needs at least one factor")
    dim = factors[0].dim
    if any(g.dim != dim for g in factors):
        raise InputError("all factors must share the same dimension")
    if len(factors) == 1:
        return factors[0]
    lam = np.zeros((dim, dim))
    eta = np.zeros(dim)
    for g in factors:
        P = _inv_pd(g.cov)
        lam += P
        eta += P @ g.mean
    cov = _inv_pd(symmetrize(lam))
    return Gaussian(cov @ eta, cov)


def data_floor(X: np.ndarray) -> float:
    """Absolute covariance floor tied to the overall scale of ``X`` (N, D)."""
    X = np.atleast_2d(X)
    var = float(np.mean(np.var(X, axis=0)))
    return max(1e-9 * var, 1e-12)


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return np.sum((X[:, None, :] - C[None, :, :]) ** 2, axis=2)


def kmeans(X: np.ndarray, K: int, seed: int, max_iter: int = 100):
    """Lloyd's algorithm with k-means++ seeding.

    Returns ``(labels, centers)``. Ties go to the lowest cluster index and an
    emptied cluster is moved to the point farthest from its assigned center.
    """
    X = np.asarray(X, dtype=float)
    N = X.shape[0]
    if K <= 0:
        raise InputError(f"K must be positive, got {K}")
    if N < K:
        raise InputError(f"need at least K={K} datapoints, got {N}")
    rng = np.random.default_rng(seed)
    centers = np.empty((K, X.shape[1]))
    centers[0] = X[rng.integers(N)]
    closest = np.sum((X - centers[0]) ** 2, axis=1)
    for k in range(1, K):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(N))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, N - 1)
        centers[k] = X[idx]
        closest = np.minimum(closest, np.sum((X - centers[k]) ** 2, axis=1))

    labels = np.full(N, -1)
    for _ in range(max_iter):
        d2 = _sq_dists(X, centers)
        new_labels = np.argmin(d2, axis=1)
        counts = np.bincount(new_labels, minlength=K)
        for k in np.flatnonzero(counts == 0):
            own = d2[np.arange(N), new_labels]
            far = int(np.argmax(own))
            new_labels[far] = k
            centers[k] = X[far]
            d2[far] = np.inf
            counts = np.bincount(new_labels, minlength=K)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for k in range(K):
            centers[k] = X[labels == k].mean(axis=0)
    return labels, centers


def kmeans_init(data, K: int, seed: int = 0, min_eps: float = 0.0):
    """Initial priors and Gaussians from a k-means partition of ``data`` (N, D)."""
    X = np.atleast_2d(np.asarray(data, dtype=float))
    labels, _ = kmeans(X, K, seed)
    if min_eps == 0.0:
        min_eps = data_floor(X)
    priors = np.bincount(labels, minlength=K) / X.shape[0]
    gaussians = []
    for k in range(K):
        pts = X[labels == k]
        mu = pts.mean(axis=0)
        diff = pts - mu
        cov = diff.T @ diff / pts.shape[0]
        gaussians.append(Gaussian(mu, regularize(cov, min_eps)))
    return priors, gaussians
