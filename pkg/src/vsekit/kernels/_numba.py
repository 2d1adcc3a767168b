"""Loop kernels compiled with numba.  Same contracts as ``_numpy``."""
import numpy as np
from numba import njit

SH, MH, WEIGHTED = 0, 1, 2


@njit(cache=True)
def _direction(scores, pos, excl, margin, kind, tau, grad):
    p = scores.shape[0]
    hard = -1
    best = -np.inf
    for j in range(p):
        if j != excl and (hard < 0 or scores[j] > best):
            best = scores[j]
            hard = j
    loss = 0.0
    if kind == SH:
        for j in range(p):
            if j == excl:
                continue
            v = margin - pos + scores[j]
            if v > 0.0:
                loss += v
                grad[j] = 1.0
    elif kind == MH:
        v = margin - pos + best
        if v > 0.0:
            loss = v
            grad[hard] = 1.0
    else:
        zmax = -np.inf
        for j in range(p):
            v = margin - pos + scores[j]
            if j != excl and v > 0.0 and v / tau > zmax:
                zmax = v / tau
        if zmax > -np.inf:
            denom = 0.0
            for j in range(p):
                v = margin - pos + scores[j]
                if j != excl and v > 0.0:
                    grad[j] = np.exp(v / tau - zmax)
                    denom += grad[j]
            for j in range(p):
                v = margin - pos + scores[j]
                if j != excl and v > 0.0:
                    grad[j] /= denom
                    loss += grad[j] * v
            for j in range(p):
                v = margin - pos + scores[j]
                if j != excl and v > 0.0:
                    grad[j] = grad[j] * (1.0 + (v - loss) / tau)
    return loss, hard


@njit(cache=True)
def hinge_terms(pos, s_cap, s_img, excl, margin, kind, tau):
    n, p = s_cap.shape
    per_pair = np.zeros(n)
    hard_c = np.empty(n, dtype=np.int64)
    hard_i = np.empty(n, dtype=np.int64)
    g_pos = np.zeros(n)
    g_cap = np.zeros((n, p))
    g_img = np.zeros((n, p))
    for k in range(n):
        lc, hc = _direction(s_cap[k], pos[k], excl[k], margin, kind, tau, g_cap[k])
        li, hi = _direction(s_img[k], pos[k], excl[k], margin, kind, tau, g_img[k])
        per_pair[k] = lc + li
        hard_c[k] = hc
        hard_i[k] = hi
        acc = 0.0
        for j in range(p):
            acc += g_cap[k, j]
        for j in range(p):
            acc += g_img[k, j]
        g_pos[k] = -acc
    return per_pair, hard_c, hard_i, g_pos, g_cap, g_img


@njit(cache=True)
def order_similarity(f, g):
    n_f, d = f.shape
    n_g = g.shape[0]
    out = np.empty((n_f, n_g))
    for m in range(n_f):
        for n in range(n_g):
            acc = 0.0
            for t in range(d):
                x = g[n, t] - f[m, t]
                if x > 0.0:
                    acc += x * x
            out[m, n] = -acc
    return out


@njit(cache=True)
def order_similarity_backward(f, g, grad_s):
    n_f, d = f.shape
    n_g = g.shape[0]
    grad_f = np.zeros((n_f, d))
    grad_g = np.zeros((n_g, d))
    for m in range(n_f):
        for n in range(n_g):
            w = 2.0 * grad_s[m, n]
            if w == 0.0:
                continue
            for t in range(d):
                x = g[n, t] - f[m, t]
                if x > 0.0:
                    grad_f[m, t] += w * x
                    grad_g[n, t] -= w * x
    return grad_f, grad_g


@njit(cache=True)
def retrieval_ranks(scores, cpi):
    n_i, n_c = scores.shape
    cap_ranks = np.ones(n_i, dtype=np.int64)
    img_ranks = np.ones(n_c, dtype=np.int64)
    for i in range(n_i):
        best = scores[i, i * cpi]
        for c in range(i * cpi + 1, (i + 1) * cpi):
            if scores[i, c] > best:
                best = scores[i, c]
        for c in range(n_c):
            if scores[i, c] > best:
                cap_ranks[i] += 1
    for c in range(n_c):
        pos = scores[c // cpi, c]
        for i in range(n_i):
            if scores[i, c] > pos:
                img_ranks[c] += 1
    return cap_ranks, img_ranks
