# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled message-passing kernels; see ``_fallback`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()




def forward_backward(double[::1] pi, double[:, ::1] trans, double[:, ::1] log_b):
    cdef Py_ssize_t T = log_b.shape[0], K = log_b.shape[1]
    cdef Py_ssize_t t, i, j
    cdef double s, m, acc
    alpha_np = np.zeros((T, K))
    beta_np = np.zeros((T, K))
    log_c_np = np.zeros(T)
    bs_np = np.empty((T, K))
    c_np = np.zeros(T)
    cdef double[:, ::1] alpha = alpha_np
    cdef double[:, ::1] beta = beta_np
    cdef double[::1] log_c = log_c_np
    cdef double[:, ::1] bs = bs_np
    cdef double[::1] c = c_np
    cdef double[::1] mx = np.empty(T)
    cdef double[::1] tmp = np.empty(K)
    cdef Py_ssize_t fail = -1

    with nogil:
        for t in range(T):
            m = log_b[t, 0]
            for i in range(1, K):
                if log_b[t, i] > m:
                    m = log_b[t, i]
            mx[t] = m
            for i in range(K):
                bs[t, i] = exp(log_b[t, i] - m)

        for t in range(T):
            s = 0.0
            for i in range(K):
                if t == 0:
                    acc = pi[i]
                else:
                    acc = 0.0
                    for j in range(K):
                        acc = acc + alpha[t - 1, j] * trans[j, i]
                tmp[i] = acc * bs[t, i]
                s = s + tmp[i]
            if not s > 0.0:
                fail = t
                break
            c[t] = s
            for i in range(K):
                alpha[t, i] = tmp[i] / s
            log_c[t] = log(s) + mx[t]

        if fail < 0:
            for i in range(K):
                beta[T - 1, i] = 1.0
            for t in range(T - 2, -1, -1):
                for j in range(K):
                    tmp[j] = bs[t + 1, j] * beta[t + 1, j]
                for i in range(K):
                    acc = 0.0
                    for j in range(K):
                        acc = acc + trans[i, j] * tmp[j]
                    beta[t, i] = acc / c[t + 1]
    return alpha_np, beta_np, log_c_np, fail


def viterbi(double[::1] log_pi, double[:, ::1] log_trans, double[:, ::1] log_b):
    cdef Py_ssize_t T = log_b.shape[0], K = log_b.shape[1]
    cdef Py_ssize_t t, i, j, best_j
    cdef double best, v
    back_np = np.zeros((T, K), dtype=np.int64)
    path_np = np.zeros(T, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] back = back_np
    cdef cnp.int64_t[::1] path = path_np
    cdef double[::1] delta = np.empty(K)
    cdef double[::1] nxt = np.empty(K)

    with nogil:
        for i in range(K):
            delta[i] = log_pi[i] + log_b[0, i]
        for t in range(1, T):
            for i in range(K):
                best = delta[0] + log_trans[0, i]
                best_j = 0
                for j in range(1, K):
                    v = delta[j] + log_trans[j, i]
                    if v > best:
                        best = v
                        best_j = j
                back[t, i] = best_j
                nxt[i] = best + log_b[t, i]
            for i in range(K):
                delta[i] = nxt[i]
        best_j = 0
        for i in range(1, K):
            if delta[i] > delta[best_j]:
                best_j = i
        path[T - 1] = best_j
        best = delta[best_j]
        for t in range(T - 1, 0, -1):
            path[t - 1] = back[t, path[t]]
    return path_np, float(best)


def hsmm_messages(double[::1] log_pi, double[:, ::1] log_trans, double[:, ::1] log_pd,
                  double[:, ::1] log_surv, double[:, ::1] log_b):
    cdef Py_ssize_t T = log_b.shape[0], K = log_b.shape[1], s_max = log_pd.shape[1]
    cdef Py_ssize_t t, i, j, s, n, start
    cdef double m, acc, v, base
    seg_np = np.empty((T, K))
    occ_np = np.empty((T, K))
    cdef double[:, ::1] seg = seg_np
    cdef double[:, ::1] occ = occ_np
    cdef double[:, ::1] entry = np.empty((T, K))
    cdef double[:, ::1] cum = np.zeros((T + 1, K))
    cdef double[::1] ta = np.empty(s_max)
    cdef double[::1] tb = np.empty(s_max)
    cdef double ma, mb, sa, sb

    with nogil:
        for t in range(T):
            for i in range(K):
                cum[t + 1, i] = cum[t, i] + log_b[t, i]
        for t in range(T):
            for i in range(K):
                if t == 0:
                    entry[0, i] = log_pi[i]
                else:
                    m = -INFINITY
                    for j in range(K):
                        v = seg[t - 1, j] + log_trans[j, i]
                        if v > m:
                            m = v
                    if m == -INFINITY:
                        entry[t, i] = -INFINITY
                    else:
                        acc = 0.0
                        for j in range(K):
                            acc = acc + exp(seg[t - 1, j] + log_trans[j, i] - m)
                        entry[t, i] = m + log(acc)
            n = s_max if s_max < t + 1 else t + 1
            for i in range(K):
                ma = -INFINITY
                mb = -INFINITY
                for s in range(n):
                    start = t - s
                    base = entry[start, i] + (cum[t + 1, i] - cum[start, i])
                    ta[s] = base + log_pd[i, s]
                    tb[s] = base + log_surv[i, s]
                    if ta[s] > ma:
                        ma = ta[s]
                    if tb[s] > mb:
                        mb = tb[s]
                if ma == -INFINITY:
                    seg[t, i] = -INFINITY
                else:
                    sa = 0.0
                    for s in range(n):
                        sa = sa + exp(ta[s] - ma)
                    seg[t, i] = ma + log(sa)
                if mb == -INFINITY:
                    occ[t, i] = -INFINITY
                else:
                    sb = 0.0
                    for s in range(n):
                        sb = sb + exp(tb[s] - mb)
                    occ[t, i] = mb + log(sb)
    return seg_np, occ_np
