"""Pure-numpy implementations of the hot kernels (fallback backend)."""
from __future__ import annotations

import numpy as np


def mixture_softmax(centers, state, logit_scale, offsets):
    """Softmax weights over mixture centers plus their weighted mean.

    logits_i = logit_scale * (centers[:, i] . state) + offsets[i]

    Returns (weights, weighted_mean, logsumexp_of_logits).
    """
    logits = logit_scale * (centers.T @ state) + offsets
    m = logits.max()
    w = np.exp(logits - m)
    z = w.sum()
    w /= z
    return w, centers @ w, float(m + np.log(z))


def mixture_softmax_identity(state, logit_scale, offsets):
    """mixture_softmax specialised to identity centers (latent space)."""
    logits = logit_scale * state + offsets
    m = logits.max()
    w = np.exp(logits - m)
    z = w.sum()
    w /= z
    return w, w, float(m + np.log(z))


def softmax_jacobian_apply(centers, weights, vec, coef_mix, coef_id):
    """Apply coef_mix * C (diag(w) - w w^T) C^T vec + coef_id * vec."""
    u = centers.T @ vec
    t = weights * u - weights * float(weights @ u)
    return coef_mix * (centers @ t) + coef_id * vec


def softmax_jacobian_apply_identity(weights, vec, coef_mix, coef_id):
    t = weights * vec - weights * float(weights @ vec)
    return coef_mix * t + coef_id * vec


def autoassoc_sign(codebook, vec):
    """sgn(X X^T vec) with the zero tie mapped to +1."""
    u = codebook @ (codebook.T @ vec)
    out = np.sign(u)
    out[out == 0] = 1.0
    return out
