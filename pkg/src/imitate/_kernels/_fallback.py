"""Pure numpy reference implementation of the message-passing kernels.

Signatures mirror ``_core.pyx`` exactly; both backends are cross-checked in
the test suite.
"""
import numpy as np
from scipy.special import logsumexp


def forward_backward(pi, trans, log_b):
    """Scaled forward-backward recursions.

    Returns ``(alpha_hat, beta_hat, log_c, fail)``. ``alpha_hat`` rows sum to
    one, ``log alpha[t] = log alpha_hat[t] + cumsum(log_c)[t]`` and the
    sequence log-likelihood is ``log_c.sum()``. ``fail`` is the first time
    index whose scaled forward mass vanished, or -1.
    """
    T, K = log_b.shape
    m = log_b.max(axis=1)
    bs = np.exp(log_b - m[:, None])
    alpha = np.zeros((T, K))
    beta = np.zeros((T, K))
    log_c = np.zeros(T)
    c = np.zeros(T)

    a = pi * bs[0]
    for t in range(T):
        if t > 0:
            a = (alpha[t - 1] @ trans) * bs[t]
        s = a.sum()
        if not s > 0.0:
            return alpha, beta, log_c, t
        c[t] = s
        alpha[t] = a / s
        log_c[t] = np.log(s) + m[t]

    beta[T - 1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[t] = trans @ (bs[t + 1] * beta[t + 1]) / c[t + 1]
    return alpha, beta, log_c, -1


def viterbi(log_pi, log_trans, log_b):
    """Max-product decoding. Returns ``(path, log_prob)``; ties go to the lowest index."""
    T, K = log_b.shape
    delta = log_pi + log_b[0]
    back = np.zeros((T, K), dtype=np.int64)
    for t in range(1, T):
        scores = delta[:, None] + log_trans
        back[t] = np.argmax(scores, axis=0)
        delta = scores[back[t], np.arange(K)] + log_b[t]
    path = np.zeros(T, dtype=np.int64)
    path[T - 1] = int(np.argmax(delta))
    log_prob = float(delta[path[T - 1]])
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, log_prob


def hsmm_messages(log_pi, log_trans, log_pd, log_surv, log_b):
    """Explicit-duration forward recursion in log space.

    ``log_pd[i, s-1]`` and ``log_surv[i, s-1]`` hold the duration log-density
    and log-survival of state ``i`` at duration ``s``. Returns
    ``(log_seg, log_occ)``: the log-probability that a segment of state ``i``
    ends at ``t`` and that state ``i`` is active at ``t``, jointly with the
    observed emissions (``log_b`` rows of zero encode unobserved steps).
    """
    T, K = log_b.shape
    s_max = log_pd.shape[1]
    cum = np.zeros((T + 1, K))
    np.cumsum(log_b, axis=0, out=cum[1:])
    entry = np.empty((T, K))
    seg = np.empty((T, K))
    occ = np.empty((T, K))
    for t in range(T):
        if t == 0:
            entry[0] = log_pi
        else:
            entry[t] = logsumexp(seg[t - 1][:, None] + log_trans, axis=0)
        n = min(s_max, t + 1)
        starts = t - np.arange(n)  # segment start for durations 1..n
        emis = cum[t + 1][None, :] - cum[starts]
        base = entry[starts] + emis
        seg[t] = logsumexp(base + log_pd[:, :n].T, axis=0)
        occ[t] = logsumexp(base + log_surv[:, :n].T, axis=0)
    return seg, occ
