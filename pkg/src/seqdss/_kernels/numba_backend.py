"""Numba-jitted implementations of the hot loops.

Same call signatures and storage conventions as ``numpy_backend``; see that
module for the documentation.  Node sweeps and replication advances are
embarrassingly parallel (disjoint writes), so prange keeps results
bit-reproducible regardless of thread count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

NAME = "numba"

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def _belief_into(k, x0, x1, lnprior, L2, cB, T):
    n_hyp = lnprior.shape[0]
    m = lnprior[0]
    T[0] = lnprior[0]
    for i in range(1, n_hyp):
        v = lnprior[i] + L2[i - 1, 0] * x0 + L2[i - 1, 1] * x1 + k * cB[i - 1]
        T[i] = v
        if v > m:
            m = v
    s = 0.0
    for i in range(n_hyp):
        w = np.exp(T[i] - m)
        T[i] = w
        s += w
    for i in range(n_hyp):
        T[i] /= s


@njit(**_JIT)
def _interp(vflat, base, lo0, st0, n0, lo1, st1, n1, q0, q1):
    u0 = (q0 - lo0) / st0
    if u0 < 0.0:
        u0 = 0.0
    elif u0 > n0 - 1.0:
        u0 = n0 - 1.0
    u1 = (q1 - lo1) / st1
    if u1 < 0.0:
        u1 = 0.0
    elif u1 > n1 - 1.0:
        u1 = n1 - 1.0
    i0 = int(u0)
    if i0 > n0 - 2:
        i0 = n0 - 2
    if i0 < 0:
        i0 = 0
    i1 = int(u1)
    if i1 > n1 - 2:
        i1 = n1 - 2
    if i1 < 0:
        i1 = 0
    f0 = u0 - i0
    f1 = u1 - i1
    i0p = i0 + 1 if i0 + 1 < n0 else n0 - 1
    i1p = i1 + 1 if i1 + 1 < n1 else n1 - 1
    r00 = vflat[base + i0 * n1 + i1]
    r01 = vflat[base + i0 * n1 + i1p]
    r10 = vflat[base + i0p * n1 + i1]
    r11 = vflat[base + i0p * n1 + i1p]
    return (r00 * (1.0 - f0) * (1.0 - f1) + r01 * (1.0 - f0) * f1
            + r10 * f0 * (1.0 - f1) + r11 * f0 * f1)


@njit(**_JIT)
def _eval_one(k, x0, x1, glo, gstep, gn, voff, vflat, horizon,
              lnprior, L2, cB, loss, mode_cost, incr, qw, T):
    n_hyp = lnprior.shape[0]
    n_modes = mode_cost.shape[1]
    n_quad = qw.shape[2]
    _belief_into(k, x0, x1, lnprior, L2, cB, T)
    best_stop = np.inf
    best_j = 0
    for j in range(n_hyp):
        s = 0.0
        for i in range(n_hyp):
            s += T[i] * loss[i, j]
        if s < best_stop:
            best_stop = s
            best_j = j
    if k >= horizon:
        return best_stop, best_j
    kn = k + 1
    base = voff[kn]
    lo0 = glo[kn, 0]
    st0 = gstep[kn, 0]
    n0 = gn[kn, 0]
    lo1 = glo[kn, 1]
    st1 = gstep[kn, 1]
    n1 = gn[kn, 1]
    best_cont = np.inf
    best_mode = 0
    for a in range(n_modes):
        acc = 0.0
        for i in range(n_hyp):
            acc += T[i] * mode_cost[i, a]
            e = 0.0
            for q in range(n_quad):
                w = qw[a, i, q]
                if w == 0.0:
                    continue
                e += w * _interp(vflat, base, lo0, st0, n0, lo1, st1, n1,
                                 x0 + incr[a, i, q, 0], x1 + incr[a, i, q, 1])
            acc += T[i] * e
        if acc < best_cont:
            best_cont = acc
            best_mode = a
    if best_stop <= best_cont:
        return best_stop, best_j
    return best_cont, n_hyp + best_mode


@njit(parallel=True, **_JIT)
def eval_actions(x0, x1, kk, glo, gstep, gn, voff, vflat, horizon,
                 lnprior, L2, cB, loss, mode_cost, incr, qw, out_val, out_act):
    for r in prange(x0.shape[0]):
        T = np.empty(lnprior.shape[0])
        v, a = _eval_one(kk[r], x0[r], x1[r], glo, gstep, gn, voff, vflat,
                         horizon, lnprior, L2, cB, loss, mode_cost, incr, qw, T)
        out_val[r] = v
        out_act[r] = a


@njit(parallel=True, **_JIT)
def sweep_stage(k, glo, gstep, gn, voff, vflat, aflat, horizon,
                lnprior, L2, cB, loss, mode_cost, incr, qw):
    n0 = gn[k, 0]
    n1 = gn[k, 1]
    lo0 = glo[k, 0]
    st0 = gstep[k, 0]
    lo1 = glo[k, 1]
    st1 = gstep[k, 1]
    base = voff[k]
    for idx in prange(n0 * n1):
        i0 = idx // n1
        i1 = idx - i0 * n1
        x0 = lo0 + st0 * i0
        x1 = lo1 + st1 * i1
        T = np.empty(lnprior.shape[0])
        v, a = _eval_one(k, x0, x1, glo, gstep, gn, voff, vflat, horizon,
                         lnprior, L2, cB, loss, mode_cost, incr, qw, T)
        vflat[base + idx] = v
        aflat[base + idx] = a


@njit(parallel=True, **_JIT)
def advance_policy(x0, x1, kk, alive, used, inc0, inc1,
                   glo, gstep, gn, voff, vflat, horizon,
                   lnprior, L2, cB, loss, mode_cost, incr, qw, out_act):
    n_hyp = lnprior.shape[0]
    chunk = inc0.shape[1]
    for r in prange(x0.shape[0]):
        if alive[r] != 1:
            continue
        T = np.empty(n_hyp)
        while True:
            v, a = _eval_one(kk[r], x0[r], x1[r], glo, gstep, gn, voff, vflat,
                             horizon, lnprior, L2, cB, loss, mode_cost, incr,
                             qw, T)
            if a < n_hyp:
                out_act[r] = a
                alive[r] = 0
                break
            u = used[r]
            if u >= chunk:
                break
            x0[r] += inc0[r, u]
            x1[r] += inc1[r, u]
            kk[r] += 1
            used[r] = u + 1


@njit(parallel=True, **_JIT)
def advance_msprt(x0, x1, kk, alive, used, inc0, inc1,
                  lnprior, L2, cB, thresholds, loss, step_cap,
                  out_act, out_forced):
    n_hyp = lnprior.shape[0]
    chunk = inc0.shape[1]
    for r in prange(x0.shape[0]):
        if alive[r] != 1:
            continue
        T = np.empty(n_hyp)
        while True:
            _belief_into(kk[r], x0[r], x1[r], lnprior, L2, cB, T)
            hit = -1
            for i in range(n_hyp):
                if T[i] >= thresholds[i]:
                    hit = i
                    break
            if hit >= 0:
                out_act[r] = hit
                alive[r] = 0
                break
            if kk[r] >= step_cap:
                best = np.inf
                bj = 0
                for j in range(n_hyp):
                    s = 0.0
                    for i in range(n_hyp):
                        s += T[i] * loss[i, j]
                    if s < best:
                        best = s
                        bj = j
                out_act[r] = bj
                out_forced[r] = 1
                alive[r] = 0
                break
            u = used[r]
            if u >= chunk:
                break
            x0[r] += inc0[r, u]
            x1[r] += inc1[r, u]
            kk[r] += 1
            used[r] = u + 1


@njit(parallel=True, **_JIT)
def msprt_cross_times(x0, x1, kk, alive, used, inc0, inc1,
                      lnprior, L2, cB, tgrid, step_cap, loss,
                      cross, ptr, forced_act):
    n_hyp = lnprior.shape[0]
    n_grid = tgrid.shape[0]
    chunk = inc0.shape[1]
    for r in prange(x0.shape[0]):
        if alive[r] != 1:
            continue
        T = np.empty(n_hyp)
        while True:
            _belief_into(kk[r], x0[r], x1[r], lnprior, L2, cB, T)
            remaining = 0
            for i in range(n_hyp):
                g = ptr[r, i]
                while g < n_grid and T[i] >= tgrid[g]:
                    cross[r, i, g] = kk[r]
                    g += 1
                ptr[r, i] = g
                remaining += n_grid - g
            if remaining == 0:
                alive[r] = 0
                break
            if kk[r] >= step_cap:
                best = np.inf
                bj = 0
                for j in range(n_hyp):
                    s = 0.0
                    for i in range(n_hyp):
                        s += T[i] * loss[i, j]
                    if s < best:
                        best = s
                        bj = j
                forced_act[r] = bj
                alive[r] = 0
                break
            u = used[r]
            if u >= chunk:
                break
            x0[r] += inc0[r, u]
            x1[r] += inc1[r, u]
            kk[r] += 1
            used[r] = u + 1


@njit(parallel=True, **_JIT)
def score_combos(cross, truths, combo_idx, loss, obs_cost, step_cap,
                 forced_act, out_sum, out_sumsq):
    n_reps = cross.shape[0]
    n_hyp = cross.shape[1]
    for c in prange(combo_idx.shape[0]):
        total = 0.0
        total2 = 0.0
        for r in range(n_reps):
            tau = np.inf
            d = -1
            for i in range(n_hyp):
                t = cross[r, i, combo_idx[c, i]]
                if t >= 0 and t < tau:
                    tau = t
                    d = i
            if d < 0:
                tau = step_cap
                d = forced_act[r]
            cost = tau * obs_cost[truths[r]] + loss[truths[r], d]
            total += cost
            total2 += cost * cost
        out_sum[c] = total
        out_sumsq[c] = total2
