"""Discrete-time linear quadratic tracking of a step-wise Gaussian reference.

The cost over a horizon of T steps is

    sum_t (x_t - mu_t)^T Q_t (x_t - mu_t) + sum_{t<T} u_t^T R u_t

subject to ``x_{t+1} = A x_t + B u_t``. The optimal policy is
``u_t = K_t (mu_t - x_t) + u_ff_t`` where ``K_t`` and ``u_ff_t`` come from the
backward recursions on ``P_t`` (Riccati) and ``d_t`` (affine term) of the
value function ``(x - mu_t)^T P_t (x - mu_t) + 2 d_t^T (x - mu_t)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur

from .errors import InputError, NumericError
from .gaussian import symmetrize


@dataclass(frozen=True, eq=False)
class LinearSystem:
    A: np.ndarray
    B: np.ndarray
    dt: float

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True, eq=False)
class CostWeights:
    Q: np.ndarray  # (T, n, n)
    R: np.ndarray  # (m, m)


@dataclass(frozen=True, eq=False)
class TrackerGains:
    """Per-step feedback ``K`` (T, m, n), feedforward ``uff`` (T, m) and value terms."""

    K: np.ndarray
    uff: np.ndarray
    P: np.ndarray
    d: np.ndarray

    @property
    def stiffness(self) -> np.ndarray:
        return self.K[:, :, : self.K.shape[1]]

    @property
    def damping(self) -> np.ndarray:
        return self.K[:, :, self.K.shape[1]:]


def double_integrator(pos_dim: int, dt: float) -> LinearSystem:
    """State ``[position; velocity]`` driven by an acceleration input."""
    if pos_dim < 1 or dt <= 0:
        raise InputError("double integrator needs pos_dim >= 1 and dt > 0")
    I = np.eye(pos_dim)
    Z = np.zeros((pos_dim, pos_dim))
    A = np.block([[I, dt * I], [Z, I]])
    B = np.vstack([0.5 * dt * dt * I, dt * I])
    return LinearSystem(A, B, float(dt))


def _ref_arrays(ref):
    if hasattr(ref, "means"):
        return np.asarray(ref.means, dtype=float), np.asarray(ref.covs, dtype=float)
    return np.asarray(ref, dtype=float), None


def reference_targets(ref, n: int) -> np.ndarray:
    """(T, n) state targets; position-only references get zero velocity targets."""
    means, _ = _ref_arrays(ref)
    D = means.shape[1]
    if D == n:
        return means
    if 2 * D == n:
        return np.hstack([means, np.zeros_like(means)])
    raise InputError(f"reference dimension {D} incompatible with state dimension {n}")


def weights_from_reference(ref, r_scalar: float = 9.0, state_dim: int | None = None) -> CostWeights:
    """Tracking weights from the reference precisions.

    ``Q_t`` is the inverse reference covariance. When ``state_dim`` is twice the
    reference dimension (position-only model, double-integrator state) the
    precision fills the position block and velocities are not penalized.
    """
    _, covs = _ref_arrays(ref)
    if covs is None:
        raise InputError("weights need a reference with covariances")
    T, D, _ = covs.shape
    n = D if state_dim is None else int(state_dim)
    if n not in (D, 2 * D):
        raise InputError(f"state dimension {n} incompatible with reference dimension {D}")
    Q = np.zeros((T, n, n))
    for t in range(T):
        try:
            L = np.linalg.cholesky(covs[t])
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"reference covariance at step {t} is not positive definite") from exc
        Linv = np.linalg.inv(L)
        Q[t, :D, :D] = symmetrize(Linv.T @ Linv)
    m = n // 2
    return CostWeights(Q, float(r_scalar) * np.eye(m))


def riccati_backward(sys: LinearSystem, ref, weights: CostWeights) -> TrackerGains:
    """Finite-horizon gains by backward recursion from ``P_T = Q_T``, ``d_T = 0``."""
    A, B, R = sys.A, sys.B, weights.R
    mu = reference_targets(ref, sys.n)
    Q = weights.Q
    T = mu.shape[0]
    if T < 1 or Q.shape[0] != T:
        raise InputError("weights and reference must share a positive horizon")
    n, m = sys.n, sys.m
    P = np.zeros((T, n, n))
    d = np.zeros((T, n))
    K = np.zeros((T, m, n))
    uff = np.zeros((T, m))
    P[T - 1] = Q[T - 1]
    for t in range(T - 2, -1, -1):
        Pn = P[t + 1]
        S = R + B.T @ Pn @ B
        try:
            G_BtP = np.linalg.solve(S, B.T @ Pn)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"R + B^T P B is singular at step {t}") from exc
        w = Pn @ (A @ mu[t] - mu[t + 1]) + d[t + 1]
        K[t] = G_BtP @ A
        uff[t] = -np.linalg.solve(S, B.T @ w)
        closed = A - B @ K[t]
        P[t] = symmetrize(Q[t] + A.T @ (Pn - Pn @ B @ G_BtP) @ A)
        d[t] = closed.T @ w
    return TrackerGains(K, uff, P, d)


def dare_residual(sys: LinearSystem, Q, R, P) -> float:
    A, B = sys.A, sys.B
    S = R + B.T @ P @ B
    f = Q + A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(S, B.T @ P @ A)
    return float(np.linalg.norm(P - f))


def dare_solve(sys: LinearSystem, Q, R) -> np.ndarray:
    """Stabilizing solution of the discrete algebraic Riccati equation.

    Built from the stable invariant subspace (eigenvalues inside the unit
    circle) of the symplectic matrix, spanned here by ordered Schur vectors:
    ``P = V21 V1^-1``.
    """
    A, B = sys.A, np.asarray(sys.B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = A.shape[0]
    if not np.any(Q):
        return np.zeros((n, n))
    try:
        Ait = np.linalg.inv(A).T
    except np.linalg.LinAlgError as exc:
        raise InputError("DARE solver needs an invertible A") from exc
    G = B @ np.linalg.solve(R, B.T)
    H = np.block([[A + G @ Ait @ Q, -G @ Ait], [-Ait @ Q, Ait]])
    _, Z, sdim = schur(H, output="real", sort="iuc")
    if sdim != n:
        raise NumericError(f"symplectic matrix has {sdim} stable eigenvalues, expected {n}")
    V1, V21 = Z[:n, :n], Z[n:, :n]
    try:
        P = np.linalg.solve(V1.T, V21.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericError("stable subspace is not a graph; DARE has no stabilizing solution") from exc
    return symmetrize(P)


def stationary_gains(sys: LinearSystem, Q, R, horizon: int) -> TrackerGains:
    """Constant infinite-horizon feedback repeated over ``horizon`` steps, no feedforward."""
    P = dare_solve(sys, Q, R)
    S = R + sys.B.T @ P @ sys.B
    K = np.linalg.solve(S, sys.B.T @ P @ sys.A)
    return TrackerGains(
        np.repeat(K[None], horizon, axis=0),
        np.zeros((horizon, sys.m)),
        np.repeat(P[None], horizon, axis=0),
        np.zeros((horizon, sys.n)),
    )


def rollout(sys: LinearSystem, gains: TrackerGains, ref, x0):
    """Closed-loop simulation; returns states (T, n) and controls (T, m)."""
    mu = reference_targets(ref, sys.n)
    T = mu.shape[0]
    x = np.asarray(x0, dtype=float).reshape(sys.n)
    X = np.zeros((T, sys.n))
    U = np.zeros((T, sys.m))
    for t in range(T):
        X[t] = x
        U[t] = gains.K[t] @ (mu[t] - x) + gains.uff[t]
        x = sys.A @ x + sys.B @ U[t]
    return X, U


def tracking_cost(X, U, ref, weights: CostWeights) -> float:
    """Quadratic cost of a state/control sequence; the last control is not charged."""
    mu = reference_targets(ref, X.shape[1])
    e = X - mu
    state = np.einsum("ti,tij,tj->", e, weights.Q, e)
    ctrl = np.einsum("ti,ij,tj->", U[:-1], weights.R, U[:-1])
    return float(state + ctrl)


def track(ref, x0, dt: float, r_scalar: float = 9.0):
    """Finite-horizon tracking of a position reference with a double integrator.

    ``x0`` may be a position (zero initial velocity) or a full state.
    Returns ``(states, controls, gains)``.
    """
    means, _ = _ref_arrays(ref)
    D = means.shape[1]
    sys = double_integrator(D, dt)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[0] == D:
        x0 = np.concatenate([x0, np.zeros(D)])
    weights = weights_from_reference(ref, r_scalar, state_dim=sys.n)
    gains = riccati_backward(sys, ref, weights)
    X, U = rollout(sys, gains, ref, x0)
    return X, U, gains
