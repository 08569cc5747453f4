"""Loop-based numba build of the batch kernels.

Same shape contract as kernels_numpy (see that module's docstring). The
bodies are written as explicit loops so numba can compile them without
object-mode fallbacks; matmul-shaped pieces still go through np.dot, which
numba lowers to BLAS. cache=True persists compiled kernels next to the
source so only the first process ever pays the JIT cost.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def _affine_tanh(x, w, b):
    out = np.dot(x, w.T)
    for i in range(out.shape[0]):
        for h in range(out.shape[1]):
            out[i, h] = np.tanh(out[i, h] + b[h])
    return out


@njit(cache=True)
def forward(xa, xv, xt, wa, ba, wv, bv, wt, bt, attn_q, head_w, head_b):
    b_n = xa.shape[0]
    n_t = attn_q.shape[0]
    n_c = head_w.shape[1]
    n_h = attn_q.shape[1]

    emb = np.empty((b_n, 3, n_h))
    emb[:, 0, :] = _affine_tanh(xa, wa, ba)
    emb[:, 1, :] = _affine_tanh(xv, wv, bv)
    emb[:, 2, :] = _affine_tanh(xt, wt, bt)

    alpha = np.empty((b_n, n_t, 3))
    fused = np.empty((b_n, n_t, n_h))
    q = np.empty((b_n, n_t, n_c))
    scores = np.empty(3)
    logits = np.empty(n_c)

    for b in range(b_n):
        for t in range(n_t):
            for m in range(3):
                acc = 0.0
                for h in range(n_h):
                    acc += attn_q[t, h] * emb[b, m, h]
                scores[m] = acc
            mx = max(scores[0], max(scores[1], scores[2]))
            tot = 0.0
            for m in range(3):
                e = np.exp(scores[m] - mx)
                alpha[b, t, m] = e
                tot += e
            for m in range(3):
                alpha[b, t, m] /= tot
            for h in range(n_h):
                acc = 0.0
                for m in range(3):
                    acc += alpha[b, t, m] * emb[b, m, h]
                fused[b, t, h] = acc
            mx = -np.inf
            for c in range(n_c):
                acc = head_b[t, c]
                for h in range(n_h):
                    acc += head_w[t, c, h] * fused[b, t, h]
                logits[c] = acc
                if acc > mx:
                    mx = acc
            tot = 0.0
            for c in range(n_c):
                e = np.exp(logits[c] - mx)
                q[b, t, c] = e
                tot += e
            for c in range(n_c):
                q[b, t, c] /= tot
    return emb, alpha, fused, q


@njit(cache=True)
def backward(xa, xv, xt, wa, wv, wt, attn_q, head_w, emb, alpha, fused, dlogits):
    b_n, n_t, n_c = dlogits.shape
    n_h = attn_q.shape[1]

    dattn_q = np.zeros((n_t, n_h))
    dhead_w = np.zeros((n_t, n_c, n_h))
    dhead_b = np.zeros((n_t, n_c))
    demb = np.zeros((b_n, 3, n_h))
    dfused = np.empty(n_h)
    dal = np.empty(3)

    for b in range(b_n):
        for t in range(n_t):
            for h in range(n_h):
                dfused[h] = 0.0
            for c in range(n_c):
                g = dlogits[b, t, c]
                dhead_b[t, c] += g
                for h in range(n_h):
                    dhead_w[t, c, h] += g * fused[b, t, h]
                    dfused[h] += g * head_w[t, c, h]
            inner = 0.0
            for m in range(3):
                acc = 0.0
                a = alpha[b, t, m]
                for h in range(n_h):
                    acc += dfused[h] * emb[b, m, h]
                    demb[b, m, h] += a * dfused[h]
                dal[m] = acc
                inner += a * acc
            for m in range(3):
                du = alpha[b, t, m] * (dal[m] - inner)
                for h in range(n_h):
                    dattn_q[t, h] += du * emb[b, m, h]
                    demb[b, m, h] += du * attn_q[t, h]

    dza = np.empty((b_n, n_h))
    dzv = np.empty((b_n, n_h))
    dzt = np.empty((b_n, n_h))
    for b in range(b_n):
        for h in range(n_h):
            e = emb[b, 0, h]
            dza[b, h] = demb[b, 0, h] * (1.0 - e * e)
            e = emb[b, 1, h]
            dzv[b, h] = demb[b, 1, h] * (1.0 - e * e)
            e = emb[b, 2, h]
            dzt[b, h] = demb[b, 2, h] * (1.0 - e * e)

    dwa = np.dot(dza.T.copy(), xa)
    dwv = np.dot(dzv.T.copy(), xv)
    dwt = np.dot(dzt.T.copy(), xt)
    dba = dza.sum(axis=0)
    dbv = dzv.sum(axis=0)
    dbt = dzt.sum(axis=0)
    return dwa, dba, dwv, dbv, dwt, dbt, dattn_q, dhead_w, dhead_b


def warmup() -> None:
    """Trigger compilation (or cache load) of both kernels on tiny inputs."""
    rng = np.random.default_rng(0)
    h, dims = 3, (2, 2, 2)
    xs = [rng.standard_normal((2, d)) for d in dims]
    ws = [rng.standard_normal((h, d)) for d in dims]
    bs = [np.zeros(h) for _ in dims]
    attn_q = rng.standard_normal((8, h))
    head_w = rng.standard_normal((8, 4, h))
    head_b = np.zeros((8, 4))
    emb, alpha, fused, _ = forward(
        xs[0], xs[1], xs[2], ws[0], bs[0], ws[1], bs[1], ws[2], bs[2], attn_q, head_w, head_b
    )
    dlogits = np.zeros((2, 8, 4))
    backward(xs[0], xs[1], xs[2], ws[0], ws[1], ws[2], attn_q, head_w, emb, alpha, fused, dlogits)
