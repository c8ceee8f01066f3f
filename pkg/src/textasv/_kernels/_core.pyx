# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Mirrors the semantics of ``pure.py``; used for the per-utterance
forward/backward and AAM loss that dominate training and attribution
time. Results agree with the pure backend to float64 rounding (the
summation order differs from numpy's pairwise reductions).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport M_PI, acos, cos, exp, log, sin, sqrt, tanh

cnp.import_array()

BACKEND = "compiled"


def encoder_forward(double[:, ::1] rows, double[::1] pool_mask,
                    double[:, ::1] hidden_w, double[::1] hidden_b,
                    double[:, ::1] penult_w, double[::1] penult_b,
                    drop_scaled, bint use_tanh):
    cdef Py_ssize_t L = rows.shape[0]
    cdef Py_ssize_t E = rows.shape[1]
    cdef Py_ssize_t H = hidden_w.shape[1]
    cdef Py_ssize_t P = penult_w.shape[1]
    cdef cnp.ndarray pooled_arr = np.zeros(E, dtype=np.float64)
    cdef cnp.ndarray h_pre_arr = np.empty(H, dtype=np.float64)
    cdef cnp.ndarray h_act_arr = np.empty(H, dtype=np.float64)
    cdef cnp.ndarray emb_arr = np.empty(P, dtype=np.float64)
    cdef double[::1] pooled = pooled_arr
    cdef double[::1] h_pre = h_pre_arr
    cdef double[::1] h_act = h_act_arr
    cdef double[::1] emb = emb_arr
    cdef double[::1] drop
    cdef bint has_drop = drop_scaled is not None
    cdef Py_ssize_t i, j, k
    cdef double n = 0.0
    cdef double acc, h

    for i in range(L):
        n += pool_mask[i]
    if n > 0.0:
        for i in range(L):
            if pool_mask[i] != 0.0:
                for j in range(E):
                    pooled[j] += rows[i, j]
        for j in range(E):
            pooled[j] /= n

    # accumulate along rows of the weight matrices (row-major friendly)
    for k in range(H):
        h_pre[k] = hidden_b[k]
    for j in range(E):
        acc = pooled[j]
        for k in range(H):
            h_pre[k] += acc * hidden_w[j, k]
    for k in range(H):
        h_act[k] = tanh(h_pre[k]) if use_tanh else h_pre[k]

    if has_drop:
        drop = drop_scaled
    for k in range(P):
        emb[k] = penult_b[k]
    for j in range(H):
        acc = h_act[j] * drop[j] if has_drop else h_act[j]
        for k in range(P):
            emb[k] += acc * penult_w[j, k]

    return emb_arr, pooled_arr, h_pre_arr, h_act_arr


def encoder_backward(double[::1] pool_mask, double[::1] pooled,
                     double[::1] hidden_act, double[:, ::1] hidden_w,
                     double[:, ::1] penult_w, drop_scaled, bint use_tanh,
                     double[::1] grad_embedding):
    cdef Py_ssize_t L = pool_mask.shape[0]
    cdef Py_ssize_t E = pooled.shape[0]
    cdef Py_ssize_t H = hidden_act.shape[0]
    cdef Py_ssize_t P = grad_embedding.shape[0]
    cdef cnp.ndarray grad_rows_arr = np.zeros((L, E), dtype=np.float64)
    cdef cnp.ndarray g_hw_arr = np.empty((E, H), dtype=np.float64)
    cdef cnp.ndarray g_hb_arr = np.empty(H, dtype=np.float64)
    cdef cnp.ndarray g_pw_arr = np.empty((H, P), dtype=np.float64)
    cdef cnp.ndarray g_pb_arr = np.empty(P, dtype=np.float64)
    cdef double[:, ::1] grad_rows = grad_rows_arr
    cdef double[:, ::1] g_hw = g_hw_arr
    cdef double[::1] g_hb = g_hb_arr
    cdef double[:, ::1] g_pw = g_pw_arr
    cdef double[::1] g_pb = g_pb_arr
    cdef double[::1] drop
    cdef bint has_drop = drop_scaled is not None
    cdef Py_ssize_t i, j, k
    cdef double n = 0.0
    cdef double acc, dropped, g

    for i in range(L):
        n += pool_mask[i]

    for k in range(P):
        g_pb[k] = grad_embedding[k]

    if has_drop:
        drop = drop_scaled
    for j in range(H):
        dropped = hidden_act[j] * drop[j] if has_drop else hidden_act[j]
        for k in range(P):
            g_pw[j, k] = dropped * grad_embedding[k]

    for j in range(H):
        acc = 0.0
        for k in range(P):
            acc += penult_w[j, k] * grad_embedding[k]
        if has_drop:
            acc *= drop[j]
        if use_tanh:
            acc *= 1.0 - hidden_act[j] * hidden_act[j]
        g_hb[j] = acc

    for j in range(E):
        for k in range(H):
            g_hw[j, k] = pooled[j] * g_hb[k]

    if n > 0.0:
        for j in range(E):
            acc = 0.0
            for k in range(H):
                acc += hidden_w[j, k] * g_hb[k]
            acc /= n
            for i in range(L):
                if pool_mask[i] != 0.0:
                    grad_rows[i, j] = acc

    return grad_rows_arr, g_hw_arr, g_hb_arr, g_pw_arr, g_pb_arr


def aam_loss_grad(double[::1] embedding, double[:, ::1] weight,
                  Py_ssize_t target, double margin, double scale,
                  double clamp_eps):
    cdef Py_ssize_t C = weight.shape[0]
    cdef Py_ssize_t D = weight.shape[1]
    cdef cnp.ndarray grad_emb_arr = np.zeros(D, dtype=np.float64)
    cdef cnp.ndarray grad_w_arr = np.empty((C, D), dtype=np.float64)
    cdef double[::1] grad_emb = grad_emb_arr
    cdef double[:, ::1] grad_w = grad_w_arr
    cdef cnp.ndarray raw_arr = np.empty(C, dtype=np.float64)
    cdef cnp.ndarray wnorm_arr = np.empty(C, dtype=np.float64)
    cdef cnp.ndarray logits_arr = np.empty(C, dtype=np.float64)
    cdef cnp.ndarray dcos_arr = np.empty(C, dtype=np.float64)
    cdef double[::1] raw = raw_arr
    cdef double[::1] w_norms = wnorm_arr
    cdef double[::1] logits = logits_arr
    cdef double[::1] d_cos = dcos_arr
    cdef cnp.ndarray ehat_arr = np.empty(D, dtype=np.float64)
    cdef double[::1] ehat = ehat_arr
    cdef Py_ssize_t j, k
    cdef double e_norm = 0.0
    cdef double lo = -1.0 + clamp_eps
    cdef double hi = 1.0 - clamp_eps
    cdef double acc, cos_t, theta, theta_m, zmax, total, loss, gt
    cdef double sin_theta, dot, prob, inv_wn
    cdef bint capped

    for k in range(D):
        e_norm += embedding[k] * embedding[k]
    e_norm = sqrt(e_norm)
    for k in range(D):
        ehat[k] = embedding[k] / e_norm

    for j in range(C):
        acc = 0.0
        for k in range(D):
            acc += weight[j, k] * weight[j, k]
        w_norms[j] = sqrt(acc)
        inv_wn = 1.0 / w_norms[j]
        acc = 0.0
        for k in range(D):
            acc += (weight[j, k] * inv_wn) * ehat[k]
        raw[j] = acc

    cos_t = raw[target]
    if cos_t < lo:
        cos_t = lo
    elif cos_t > hi:
        cos_t = hi
    capped = False

    for j in range(C):
        acc = raw[j]
        if acc < lo:
            acc = lo
        elif acc > hi:
            acc = hi
        logits[j] = scale * acc
    if margin != 0.0:
        theta = acos(cos_t)
        theta_m = theta + margin
        capped = theta_m >= M_PI
        logits[target] = scale * cos(M_PI if capped else theta_m)

    zmax = logits[0]
    for j in range(1, C):
        if logits[j] > zmax:
            zmax = logits[j]
    total = 0.0
    for j in range(C):
        total += exp(logits[j] - zmax)
    loss = log(total) + zmax - logits[target]

    for j in range(C):
        prob = exp(logits[j] - zmax) / total
        if j == target:
            prob -= 1.0
        d_cos[j] = prob * scale
    if margin != 0.0:
        if capped:
            d_cos[target] = 0.0
        else:
            gt = d_cos[target] / scale
            sin_theta = sqrt(1.0 - cos_t * cos_t)
            d_cos[target] = gt * scale * sin(theta_m) / sin_theta
    for j in range(C):
        if raw[j] <= lo or raw[j] >= hi:
            d_cos[j] = 0.0

    # grad wrt the raw embedding through both normalizations
    dot = 0.0
    for j in range(C):
        if d_cos[j] == 0.0:
            continue
        acc = d_cos[j] / w_norms[j]
        for k in range(D):
            grad_emb[k] += acc * weight[j, k]
    for k in range(D):
        dot += ehat[k] * grad_emb[k]
    for k in range(D):
        grad_emb[k] = (grad_emb[k] - dot * ehat[k]) / e_norm

    for j in range(C):
        inv_wn = 1.0 / w_norms[j]
        acc = d_cos[j] * inv_wn
        for k in range(D):
            grad_w[j, k] = acc * (ehat[k] - raw[j] * weight[j, k] * inv_wn)

    return loss, grad_emb_arr, grad_w_arr
