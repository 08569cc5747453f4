"""Vectorised numpy build of the batch forward and backward kernels.

Shared shape contract (all arrays float64, B = batch, H = hidden width,
T = 8 tasks, C = 4 score bins, M = 3 modalities):

  inputs    xa (B, da)   xv (B, dv)   xt (B, dt)
  encoders  wa (H, da) ba (H,)  wv (H, dv) bv (H,)  wt (H, dt) bt (H,)
  attention attn_q (T, H)     one scoring vector per task
  heads     head_w (T, C, H)  head_b (T, C)

forward returns
  emb   (B, M, H)  tanh encodings, one row per modality
  alpha (B, T, M)  attention weights, softmax over modalities
  fused (B, T, H)  attention-weighted sum of the encodings
  q     (B, T, C)  per-task softmax distributions

backward consumes dlogits (B, T, C), the gradient of the scalar loss with
respect to the pre-softmax head activations, plus the forward caches, and
returns gradients in parameter order:
  (dwa, dba, dwv, dbv, dwt, dbt, dattn_q, dhead_w, dhead_b)

Both backends implement exactly this contract; kernels_numba is the
loop-based jitted twin.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(xa, xv, xt, wa, ba, wv, bv, wt, bt, attn_q, head_w, head_b):
    ea = np.tanh(xa @ wa.T + ba)
    ev = np.tanh(xv @ wv.T + bv)
    et = np.tanh(xt @ wt.T + bt)
    emb = np.stack((ea, ev, et), axis=1)
    scores = np.einsum("bmh,th->btm", emb, attn_q)
    alpha = _softmax(scores)
    fused = np.einsum("btm,bmh->bth", alpha, emb)
    logits = np.einsum("bth,tch->btc", fused, head_w) + head_b
    q = _softmax(logits)
    return emb, alpha, fused, q


def backward(xa, xv, xt, wa, wv, wt, attn_q, head_w, emb, alpha, fused, dlogits):
    dhead_w = np.einsum("btc,bth->tch", dlogits, fused)
    dhead_b = dlogits.sum(axis=0)
    dfused = np.einsum("btc,tch->bth", dlogits, head_w)

    dalpha = np.einsum("bth,bmh->btm", dfused, emb)
    demb = np.einsum("btm,bth->bmh", alpha, dfused)
    # softmax jacobian over the modality axis
    dscore = alpha * (dalpha - (alpha * dalpha).sum(axis=2, keepdims=True))
    dattn_q = np.einsum("btm,bmh->th", dscore, emb)
    demb += np.einsum("btm,th->bmh", dscore, attn_q)

    enc_grads = []
    for m, x in enumerate((xa, xv, xt)):
        dz = demb[:, m, :] * (1.0 - emb[:, m, :] ** 2)
        enc_grads.append((dz.T @ x, dz.sum(axis=0)))
    (dwa, dba), (dwv, dbv), (dwt, dbt) = enc_grads
    return dwa, dba, dwv, dbv, dwt, dbt, dattn_q, dhead_w, dhead_b
