"""Vectorized NumPy implementations of the hot loops.

Functional mirror of ``numba_backend``; selected via the SEQDSS_NUMBA
environment flag or when numba is unavailable.  All functions share the
stage-table storage convention described in ``solver.py``: stage k occupies
``vflat[voff[k]:voff[k+1]]`` in row-major (dim0, dim1) order, with geometry
rows ``glo[k], gstep[k], gn[k]``.  One-dimensional problems use a degenerate
second dimension (n1 = 1).
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"

_CHUNK = 16384


def _bilinear(vflat, base, lo0, st0, n0, lo1, st1, n1, q0, q1):
    u0 = np.clip((q0 - lo0) / st0, 0.0, n0 - 1.0)
    u1 = np.clip((q1 - lo1) / st1, 0.0, n1 - 1.0)
    i0 = np.floor(u0).astype(np.int64)
    i1 = np.floor(u1).astype(np.int64)
    i0 = np.maximum(np.minimum(i0, n0 - 2), 0)
    i1 = np.maximum(np.minimum(i1, n1 - 2), 0)
    f0 = u0 - i0
    f1 = u1 - i1
    i0p = np.minimum(i0 + 1, n0 - 1)
    i1p = np.minimum(i1 + 1, n1 - 1)
    r00 = vflat[base + i0 * n1 + i1]
    r01 = vflat[base + i0 * n1 + i1p]
    r10 = vflat[base + i0p * n1 + i1]
    r11 = vflat[base + i0p * n1 + i1p]
    return (r00 * (1.0 - f0) * (1.0 - f1) + r01 * (1.0 - f0) * f1
            + r10 * f0 * (1.0 - f1) + r11 * f0 * f1)


def _beliefs(x0, x1, kk, lnprior, L2, cB):
    drift = (x0[:, None] * L2[None, :, 0] + x1[:, None] * L2[None, :, 1]
             + kk[:, None] * cB[None, :])
    logits = np.empty((x0.size, lnprior.size))
    logits[:, 0] = lnprior[0]
    logits[:, 1:] = lnprior[1:] + drift
    logits -= logits.max(axis=1, keepdims=True)
    T = np.exp(logits)
    T /= T.sum(axis=1, keepdims=True)
    return T


def eval_actions(x0, x1, kk, glo, gstep, gn, voff, vflat, horizon,
                 lnprior, L2, cB, loss, mode_cost, incr, qw, out_val, out_act):
    n = x0.size
    n_hyp = lnprior.size
    n_modes = mode_cost.shape[1]
    T = _beliefs(x0, x1, kk, lnprior, L2, cB)
    stops = T @ loss
    best_j = np.argmin(stops, axis=1)
    best_stop = stops[np.arange(n), best_j]
    out_val[:] = best_stop
    out_act[:] = best_j
    live = kk < horizon
    if not np.any(live):
        return
    li = np.nonzero(live)[0]
    kn = kk[li] + 1
    base = voff[kn]
    lo0 = glo[kn, 0]
    st0 = gstep[kn, 0]
    n0 = gn[kn, 0]
    lo1 = glo[kn, 1]
    st1 = gstep[kn, 1]
    n1 = gn[kn, 1]
    cont_best = np.full(li.size, np.inf)
    mode_best = np.zeros(li.size, dtype=np.int64)
    for a in range(n_modes):
        acc = T[li] @ mode_cost[:, a]
        for i in range(n_hyp):
            w = qw[a, i]
            nz = w > 0.0
            if not np.any(nz):
                continue
            q0 = x0[li, None] + incr[a, i, nz, 0][None, :]
            q1 = x1[li, None] + incr[a, i, nz, 1][None, :]
            vals = _bilinear(vflat, base[:, None], lo0[:, None], st0[:, None],
                             n0[:, None], lo1[:, None], st1[:, None], n1[:, None],
                             q0, q1)
            acc += T[li, i] * (vals @ w[nz])
        upd = acc < cont_best
        cont_best[upd] = acc[upd]
        mode_best[upd] = a
    accept = best_stop[li] <= cont_best
    out_val[li] = np.minimum(best_stop[li], cont_best)
    out_act[li] = np.where(accept, best_j[li], n_hyp + mode_best)


def sweep_stage(k, glo, gstep, gn, voff, vflat, aflat, horizon,
                lnprior, L2, cB, loss, mode_cost, incr, qw):
    n0, n1 = int(gn[k, 0]), int(gn[k, 1])
    total = n0 * n1
    xs0 = glo[k, 0] + gstep[k, 0] * np.arange(n0)
    xs1 = glo[k, 1] + gstep[k, 1] * np.arange(n1)
    X0 = np.repeat(xs0, n1)
    X1 = np.tile(xs1, n0)
    base = voff[k]
    for s in range(0, total, _CHUNK):
        e = min(s + _CHUNK, total)
        m = e - s
        kk = np.full(m, k, dtype=np.int64)
        eval_actions(X0[s:e], X1[s:e], kk, glo, gstep, gn, voff, vflat, horizon,
                     lnprior, L2, cB, loss, mode_cost, incr, qw,
                     vflat[base + s:base + e], aflat[base + s:base + e])


def advance_policy(x0, x1, kk, alive, used, inc0, inc1,
                   glo, gstep, gn, voff, vflat, horizon,
                   lnprior, L2, cB, loss, mode_cost, incr, qw, out_act):
    n_hyp = lnprior.size
    chunk = inc0.shape[1]
    while True:
        sel = np.nonzero(alive == 1)[0]
        if sel.size == 0:
            return
        val = np.empty(sel.size)
        act = np.empty(sel.size, dtype=np.int64)
        eval_actions(x0[sel], x1[sel], kk[sel], glo, gstep, gn, voff, vflat,
                     horizon, lnprior, L2, cB, loss, mode_cost, incr, qw, val, act)
        stop = act < n_hyp
        stopped = sel[stop]
        out_act[stopped] = act[stop]
        alive[stopped] = 0
        waiting = sel[~stop]
        can = used[waiting] < chunk
        movers = waiting[can]
        if movers.size == 0:
            return
        u = used[movers]
        x0[movers] += inc0[movers, u]
        x1[movers] += inc1[movers, u]
        kk[movers] += 1
        used[movers] = u + 1


def advance_msprt(x0, x1, kk, alive, used, inc0, inc1,
                  lnprior, L2, cB, thresholds, loss, step_cap,
                  out_act, out_forced):
    chunk = inc0.shape[1]
    while True:
        sel = np.nonzero(alive == 1)[0]
        if sel.size == 0:
            return
        T = _beliefs(x0[sel], x1[sel], kk[sel], lnprior, L2, cB)
        hit = T >= thresholds[None, :]
        any_hit = hit.any(axis=1)
        first = np.argmax(hit, axis=1)
        acceptors = sel[any_hit]
        out_act[acceptors] = first[any_hit]
        alive[acceptors] = 0
        rest = sel[~any_hit]
        capped = rest[kk[rest] >= step_cap]
        if capped.size:
            Tc = _beliefs(x0[capped], x1[capped], kk[capped], lnprior, L2, cB)
            out_act[capped] = np.argmin(Tc @ loss, axis=1)
            out_forced[capped] = 1
            alive[capped] = 0
        movers = rest[kk[rest] < step_cap]
        movers = movers[used[movers] < chunk]
        if movers.size == 0:
            return
        u = used[movers]
        x0[movers] += inc0[movers, u]
        x1[movers] += inc1[movers, u]
        kk[movers] += 1
        used[movers] = u + 1


def msprt_cross_times(x0, x1, kk, alive, used, inc0, inc1,
                      lnprior, L2, cB, tgrid, step_cap, loss,
                      cross, ptr, forced_act):
    n_hyp = lnprior.size
    n_grid = tgrid.size
    chunk = inc0.shape[1]
    while True:
        sel = np.nonzero(alive == 1)[0]
        if sel.size == 0:
            return
        T = _beliefs(x0[sel], x1[sel], kk[sel], lnprior, L2, cB)
        for i in range(n_hyp):
            for g in range(n_grid):
                open_g = ptr[sel, i] == g
                crossed = open_g & (T[:, i] >= tgrid[g])
                rows = sel[crossed]
                if rows.size:
                    cross[rows, i, g] = kk[rows]
                    ptr[rows, i] = g + 1
        done = (ptr[sel] >= n_grid).all(axis=1)
        alive[sel[done]] = 0
        rest = sel[~done]
        capped = rest[kk[rest] >= step_cap]
        if capped.size:
            Tc = _beliefs(x0[capped], x1[capped], kk[capped], lnprior, L2, cB)
            forced_act[capped] = np.argmin(Tc @ loss, axis=1)
            alive[capped] = 0
        movers = rest[kk[rest] < step_cap]
        movers = movers[used[movers] < chunk]
        if movers.size == 0:
            return
        u = used[movers]
        x0[movers] += inc0[movers, u]
        x1[movers] += inc1[movers, u]
        kk[movers] += 1
        used[movers] = u + 1


def score_combos(cross, truths, combo_idx, loss, obs_cost, step_cap,
                 forced_act, out_sum, out_sumsq):
    n_reps = cross.shape[0]
    rows = np.arange(n_reps)
    c_truth = obs_cost[truths]
    for c in range(combo_idx.shape[0]):
        taus = cross[rows[:, None], np.arange(cross.shape[1])[None, :],
                     combo_idx[c][None, :]].astype(np.float64)
        taus[taus < 0] = np.inf
        tau = taus.min(axis=1)
        d = np.argmin(taus, axis=1)
        never = ~np.isfinite(tau)
        d = np.where(never, forced_act, d)
        tau = np.where(never, float(step_cap), tau)
        cost = tau * c_truth + loss[truths, d]
        out_sum[c] = cost.sum()
        out_sumsq[c] = (cost * cost).sum()
