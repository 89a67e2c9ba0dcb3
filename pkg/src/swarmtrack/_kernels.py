"""Compiled inner loop of the belief-space lookahead."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# must match swarmtrack.sensing._NORM_SLACK
_NORM_SLACK = 1e-12


@njit(cache=True)
def _clamp(ux, uy, v_max):
    norm = math.hypot(ux, uy)
    if norm > v_max * (1.0 + _NORM_SLACK):
        scale = v_max / norm
        return ux * scale, uy * scale
    return ux, uy


@njit(cache=True)
def lookahead_values(
    controls,  # (B, n, 2)
    samples,  # (M, N, T, 4)
    occluded,  # (M, N, T) bool
    pos0,  # (n, 2)
    alpha,
    half,
    v_max,
    d0,  # (n,)
    holders,  # (n, T) bool
    n_holders,  # (T,)
    cov0,  # (T, 4, 4)
    trace0,  # (T,)
    pred_means,  # (N + 1, T, 4)
    dt,
    qa,
    qb,
    qd,
    r0,
    v0,
    lo,
    hi,
):
    B, n = controls.shape[0], controls.shape[1]
    M, N, T = samples.shape[0], samples.shape[1], samples.shape[2]
    out = np.zeros(B)
    pos = np.empty((n, 2))
    tr = np.empty(T)
    a0 = np.empty(T)
    a1 = np.empty(T)
    a2 = np.empty(T)
    b00 = np.empty(T)
    b01 = np.empty(T)
    b10 = np.empty(T)
    b11 = np.empty(T)
    d0_ = np.empty(T)
    d1_ = np.empty(T)
    d2_ = np.empty(T)
    for b in range(B):
        acc = 0.0
        for m in range(M):
            for i in range(n):
                pos[i, 0] = pos0[i, 0]
                pos[i, 1] = pos0[i, 1]
            for t in range(T):
                tr[t] = trace0[t]
                a0[t] = cov0[t, 0, 0]
                a1[t] = cov0[t, 0, 1]
                a2[t] = cov0[t, 1, 1]
                b00[t] = cov0[t, 0, 2]
                b01[t] = cov0[t, 0, 3]
                b10[t] = cov0[t, 1, 2]
                b11[t] = cov0[t, 1, 3]
                d0_[t] = cov0[t, 2, 2]
                d1_[t] = cov0[t, 2, 3]
                d2_[t] = cov0[t, 3, 3]
            total = 0.0
            for k in range(N):
                for i in range(n):
                    if k == 0:
                        ux, uy = _clamp(controls[b, i, 0], controls[b, i, 1], v_max[i])
                    else:
                        best = -1
                        best_tr = 0.0
                        best_d = 0.0
                        for t in range(T):
                            if not holders[i, t]:
                                continue
                            ox = pred_means[k, t, 0] - pos[i, 0]
                            oy = pred_means[k, t, 1] - pos[i, 1]
                            dist = math.hypot(ox, oy)
                            if dist > d0[i]:
                                continue
                            if best < 0 or tr[t] < best_tr or (tr[t] == best_tr and dist < best_d):
                                best, best_tr, best_d = t, tr[t], dist
                        ux = 0.0
                        uy = 0.0
                        if best >= 0 and best_d > 0.0:
                            scale = v0 / best_d
                            ux = (pred_means[k, best, 0] - pos[i, 0]) * scale
                            uy = (pred_means[k, best, 1] - pos[i, 1]) * scale
                        ux, uy = _clamp(ux, uy, v_max[i])
                    pos[i, 0] = min(max(pos[i, 0] + ux * dt, lo[0]), hi[0])
                    pos[i, 1] = min(max(pos[i, 1] + uy * dt, lo[1]), hi[1])
                for t in range(T):
                    # NCV predict on the 2x2 blocks
                    pa0 = a0[t] + 2 * dt * b00[t] + dt * dt * d0_[t] + qa
                    pa1 = a1[t] + dt * (b01[t] + b10[t]) + dt * dt * d1_[t]
                    pa2 = a2[t] + 2 * dt * b11[t] + dt * dt * d2_[t] + qa
                    pb00 = b00[t] + dt * d0_[t] + qb
                    pb01 = b01[t] + dt * d1_[t]
                    pb10 = b10[t] + dt * d1_[t]
                    pb11 = b11[t] + dt * d2_[t] + qb
                    pd0 = d0_[t] + qd
                    pd1 = d1_[t]
                    pd2 = d2_[t] + qd
                    # information trace through the Schur complement
                    det_a = pa0 * pa2 - pa1 * pa1
                    x00 = (pa2 * pb00 - pa1 * pb10) / det_a
                    x01 = (pa2 * pb01 - pa1 * pb11) / det_a
                    x10 = (pa0 * pb10 - pa1 * pb00) / det_a
                    x11 = (pa0 * pb11 - pa1 * pb01) / det_a
                    s0 = pd0 - (pb00 * x00 + pb10 * x10)
                    s1 = pd1 - (pb00 * x01 + pb10 * x11)
                    s2 = pd2 - (pb01 * x01 + pb11 * x11)
                    det_s = s0 * s2 - s1 * s1
                    quad = (
                        s2 * (x00 * x00 + x10 * x10)
                        - 2 * s1 * (x00 * x01 + x10 * x11)
                        + s0 * (x01 * x01 + x11 * x11)
                    )
                    tr_pred = (pa0 + pa2) / det_a + (quad + s0 + s2) / det_s
                    # fused information gain from every agent seeing the sample
                    w0 = 0.0
                    w1 = 0.0
                    w2 = 0.0
                    if not occluded[m, k, t]:
                        tx = samples[m, k, t, 0]
                        ty = samples[m, k, t, 1]
                        for i in range(n):
                            if not holders[i, t]:
                                continue
                            dx = tx - pos[i, 0]
                            dy = ty - pos[i, 1]
                            if abs(dx) > half[i] or abs(dy) > half[i]:
                                continue
                            dist = math.hypot(dx, dy)
                            r = max(dist, r0)
                            if dist > 0:
                                c = dx / dist
                                s = dy / dist
                            else:
                                c = 1.0
                                s = 0.0
                            ia = 1.0 / (0.1 * r)
                            ib = 1.0 / (0.1 * math.pi * r)
                            wt = 1.0 / (alpha[i] * n_holders[t])
                            w0 += wt * (ia * c * c + ib * s * s)
                            w1 += wt * ((ia - ib) * c * s)
                            w2 += wt * (ia * s * s + ib * c * c)
                    tr[t] = tr_pred + w0 + w2
                    total += tr[t]
                    # Woodbury update, K = (I + W A)^-1 W
                    g00 = 1 + w0 * pa0 + w1 * pa1
                    g01 = w0 * pa1 + w1 * pa2
                    g10 = w1 * pa0 + w2 * pa1
                    g11 = 1 + w1 * pa1 + w2 * pa2
                    det_g = g00 * g11 - g01 * g10
                    k00 = (g11 * w0 - g01 * w1) / det_g
                    k01 = (g11 * w1 - g01 * w2) / det_g
                    k10 = (g00 * w1 - g10 * w0) / det_g
                    k11 = (g00 * w2 - g10 * w1) / det_g
                    ka00 = k00 * pa0 + k01 * pa1
                    ka01 = k00 * pa1 + k01 * pa2
                    ka10 = k10 * pa0 + k11 * pa1
                    ka11 = k10 * pa1 + k11 * pa2
                    kb00 = k00 * pb00 + k01 * pb10
                    kb01 = k00 * pb01 + k01 * pb11
                    kb10 = k10 * pb00 + k11 * pb10
                    kb11 = k10 * pb01 + k11 * pb11
                    a0[t] = pa0 - (pa0 * ka00 + pa1 * ka10)
                    a1[t] = pa1 - 0.5 * ((pa0 * ka01 + pa1 * ka11) + (pa1 * ka00 + pa2 * ka10))
                    a2[t] = pa2 - (pa1 * ka01 + pa2 * ka11)
                    b00[t] = pb00 - (pa0 * kb00 + pa1 * kb10)
                    b01[t] = pb01 - (pa0 * kb01 + pa1 * kb11)
                    b10[t] = pb10 - (pa1 * kb00 + pa2 * kb10)
                    b11[t] = pb11 - (pa1 * kb01 + pa2 * kb11)
                    d0_[t] = pd0 - (pb00 * kb00 + pb10 * kb10)
                    d1_[t] = pd1 - 0.5 * ((pb00 * kb01 + pb10 * kb11) + (pb01 * kb00 + pb11 * kb10))
                    d2_[t] = pd2 - (pb01 * kb01 + pb11 * kb11)
            acc += total
        out[b] = acc / M
    return out
