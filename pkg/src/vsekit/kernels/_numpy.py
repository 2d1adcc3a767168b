"""Vectorized numpy implementations of the hot kernels.

Every function here has a twin in ``_numba`` with the same signature.
"""
import numpy as np

SH, MH, WEIGHTED = 0, 1, 2

# elements per temporary block in the chunked order-similarity kernels
_BLOCK = 1 << 22


def _negative_mask(n, p, excl):
    mask = np.ones((n, p), dtype=bool)
    rows = np.nonzero(excl >= 0)[0]
    mask[rows, excl[rows]] = False
    return mask


def _direction(scores, pos, mask, margin, kind, tau):
    n = scores.shape[0]
    rows = np.arange(n)
    viol = margin - pos[:, None] + scores
    hard = np.argmax(np.where(mask, scores, -np.inf), axis=1)
    grad = np.zeros_like(scores)
    if kind == SH:
        active = mask & (viol > 0)
        loss = np.where(active, viol, 0.0).sum(axis=1)
        grad[active] = 1.0
    elif kind == MH:
        top = viol[rows, hard]
        loss = np.maximum(top, 0.0)
        grad[rows, hard] = (top > 0).astype(scores.dtype)
    else:
        active = mask & (viol > 0)
        z = np.where(active, viol / tau, -np.inf)
        zmax = z.max(axis=1)
        has = np.isfinite(zmax)
        z = z - np.where(has, zmax, 0.0)[:, None]
        e = np.where(active, np.exp(z), 0.0)
        denom = e.sum(axis=1)
        w = np.divide(e, denom[:, None], out=np.zeros_like(e), where=has[:, None])
        loss = np.where(active, w * viol, 0.0).sum(axis=1)
        grad = np.where(active, w * (1.0 + (viol - loss[:, None]) / tau), 0.0)
    return loss, hard, grad


def hinge_terms(pos, s_cap, s_img, excl, margin, kind, tau):
    """Per-anchor triplet hinge losses and their gradients.

    ``s_cap[k, j]`` scores anchor image k against pool caption j and
    ``s_img[k, j]`` scores pool image j against anchor caption k.
    ``excl[k]`` is the pool column holding anchor k itself, or -1.
    Gradients are of the per-pair loss sum.
    """
    n, p = s_cap.shape
    mask = _negative_mask(n, p, excl)
    loss_c, hard_c, g_cap = _direction(s_cap, pos, mask, margin, kind, tau)
    loss_i, hard_i, g_img = _direction(s_img, pos, mask, margin, kind, tau)
    g_pos = -(g_cap.sum(axis=1) + g_img.sum(axis=1))
    return loss_c + loss_i, hard_c, hard_i, g_pos, g_cap, g_img


def _row_chunk(n_g, d):
    return max(1, _BLOCK // max(1, n_g * d))


def order_similarity(f, g):
    """-||max(0, g_n - f_m)||^2 for every (m, n)."""
    n_f, d = f.shape
    out = np.empty((n_f, g.shape[0]), dtype=np.result_type(f, g))
    step = _row_chunk(g.shape[0], d)
    for lo in range(0, n_f, step):
        diff = np.maximum(g[None, :, :] - f[lo:lo + step, None, :], 0.0)
        out[lo:lo + step] = -np.einsum("mnd,mnd->mn", diff, diff)
    return out


def order_similarity_backward(f, g, grad_s):
    grad_f = np.zeros_like(f)
    grad_g = np.zeros_like(g)
    step = _row_chunk(g.shape[0], f.shape[1])
    for lo in range(0, f.shape[0], step):
        diff = np.maximum(g[None, :, :] - f[lo:lo + step, None, :], 0.0)
        weighted = 2.0 * grad_s[lo:lo + step, :, None] * diff
        grad_f[lo:lo + step] += weighted.sum(axis=1)
        grad_g -= weighted.sum(axis=0)
    return grad_f, grad_g


def retrieval_ranks(scores, cpi):
    """Optimistic 1-based ranks for caption and image retrieval.

    ``scores`` is images x captions; captions ``[j*cpi, (j+1)*cpi)``
    belong to image j.
    """
    n_i, n_c = scores.shape
    own = scores.reshape(n_i, n_i, cpi)[np.arange(n_i), np.arange(n_i)]
    best = own.max(axis=1)
    cap_ranks = 1 + (scores > best[:, None]).sum(axis=1)
    pos = scores[np.arange(n_c) // cpi, np.arange(n_c)]
    img_ranks = 1 + (scores > pos[None, :]).sum(axis=0)
    return cap_ranks.astype(np.int64), img_ranks.astype(np.int64)
