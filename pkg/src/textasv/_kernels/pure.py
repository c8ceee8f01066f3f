"""Pure-numpy implementations of the hot kernels.

Semantics here are the reference; the compiled core in ``_core.pyx``
mirrors these functions. Callers validate inputs; kernels assume
float64 C-contiguous arrays and consistent shapes.
"""

import numpy as np

BACKEND = "pure"


def encoder_forward(rows, pool_mask, hidden_w, hidden_b, penult_w, penult_b,
                    drop_scaled, use_tanh):
    """Forward pass from token-embedding rows.

    rows:       (L, E) token embedding rows
    pool_mask:  (L,) 1.0 where the position participates in mean pooling
    drop_scaled: (H,) inverted-scaled dropout mask, or None for eval mode
    use_tanh:   apply tanh after the hidden affine (identity otherwise)

    Returns (embedding, pooled, hidden_pre, hidden_act).
    """
    n = pool_mask.sum()
    if n > 0.0:
        pooled = (rows * pool_mask[:, None]).sum(axis=0) / n
    else:
        pooled = np.zeros(rows.shape[1])
    hidden_pre = pooled @ hidden_w + hidden_b
    hidden_act = np.tanh(hidden_pre) if use_tanh else hidden_pre.copy()
    dropped = hidden_act * drop_scaled if drop_scaled is not None else hidden_act
    embedding = dropped @ penult_w + penult_b
    return embedding, pooled, hidden_pre, hidden_act


def encoder_backward(pool_mask, pooled, hidden_act, hidden_w, penult_w,
                     drop_scaled, use_tanh, grad_embedding):
    """Exact gradients of encoder_forward with respect to the affine
    parameters and the input rows, for a fixed dropout realization.

    Returns (grad_rows, grad_hidden_w, grad_hidden_b,
             grad_penult_w, grad_penult_b).
    """
    if drop_scaled is not None:
        dropped = hidden_act * drop_scaled
    else:
        dropped = hidden_act
    grad_penult_b = grad_embedding.copy()
    grad_penult_w = np.outer(dropped, grad_embedding)
    g_dropped = penult_w @ grad_embedding
    g_act = g_dropped * drop_scaled if drop_scaled is not None else g_dropped
    g_pre = g_act * (1.0 - hidden_act * hidden_act) if use_tanh else g_act
    grad_hidden_b = g_pre.copy()
    grad_hidden_w = np.outer(pooled, g_pre)
    g_pooled = hidden_w @ g_pre
    n = pool_mask.sum()
    if n > 0.0:
        grad_rows = pool_mask[:, None] * (g_pooled[None, :] / n)
    else:
        grad_rows = np.zeros((pool_mask.shape[0], g_pooled.shape[0]))
    return grad_rows, grad_hidden_w, grad_hidden_b, grad_penult_w, grad_penult_b


def aam_loss_grad(embedding, weight, target, margin, scale, clamp_eps):
    """Additive-angular-margin softmax cross-entropy with exact gradients.

    Both the embedding and each classifier row are L2-normalized inside;
    cosines are clamped to [-1+clamp_eps, 1-clamp_eps] and the clamped
    region contributes zero derivative, as does the min(theta+m, pi) cap.

    Returns (loss, grad_embedding, grad_weight).
    """
    e_norm = np.sqrt(embedding @ embedding)
    ehat = embedding / e_norm
    w_norms = np.sqrt((weight * weight).sum(axis=1))
    what = weight / w_norms[:, None]
    raw = what @ ehat
    lo, hi = -1.0 + clamp_eps, 1.0 - clamp_eps
    cos = np.clip(raw, lo, hi)
    active = (raw > lo) & (raw < hi)

    logits = scale * cos
    capped = False
    if margin != 0.0:
        theta = np.arccos(cos[target])
        theta_m = theta + margin
        capped = theta_m >= np.pi
        logits[target] = scale * np.cos(min(theta_m, np.pi))

    zmax = logits.max()
    exps = np.exp(logits - zmax)
    total = exps.sum()
    prob = exps / total
    loss = float(np.log(total) + zmax - logits[target])

    g_logits = prob.copy()
    g_logits[target] -= 1.0
    d_cos = g_logits * scale
    if margin != 0.0:
        if capped:
            d_cos[target] = 0.0
        else:
            sin_theta = np.sqrt(1.0 - cos[target] * cos[target])
            d_cos[target] = (g_logits[target] * scale
                             * np.sin(theta_m) / sin_theta)
    d_cos = d_cos * active

    grad_ehat = what.T @ d_cos
    grad_embedding = (grad_ehat - (ehat @ grad_ehat) * ehat) / e_norm
    grad_weight = d_cos[:, None] * (ehat[None, :] - raw[:, None] * what)
    grad_weight /= w_norms[:, None]
    return loss, grad_embedding, grad_weight
