"""Multi-hypothesis probability-ratio test baseline and its threshold tuning.

The policy stops as soon as any posterior component reaches its fixed
threshold, accepting the lowest-indexed hypothesis that qualifies; a step cap
forces a one-shot minimum-expected-loss acceptance so that badly tuned
threshold combinations still terminate.  Tuning enumerates a grid of
threshold combinations under common random numbers: each replication's
posterior path is simulated once and only the per-threshold first-crossing
times are kept, so every combination is scored on identical streams.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ._kernels import get_backend
from ._streams import ReplicationStreams, chunk_size
from .diagnostic import Belief, HypothesisSet, build_diagnostic
from .solver import model_from_hypotheses

__all__ = ["MsprtPolicy", "TuneResult", "msprt_step", "msprt_tune",
           "DEFAULT_THRESHOLD_GRID"]

DEFAULT_THRESHOLD_GRID = tuple(np.round(np.arange(0.50, 0.96, 0.05), 2)) + (0.99, 0.999)
DEFAULT_STEP_CAP = 10_000
WAIT = -1


@dataclass(frozen=True)
class MsprtPolicy:
    """Per-hypothesis acceptance thresholds in (0, 1) plus a termination cap."""

    thresholds: np.ndarray
    step_cap: int = DEFAULT_STEP_CAP

    def __post_init__(self):
        th = np.asarray(self.thresholds, dtype=float)
        if np.any(th <= 0.0) or np.any(th >= 1.0):
            raise ValueError(f"thresholds must lie strictly in (0, 1), got {th}")
        if self.step_cap < 1:
            raise ValueError("step_cap must be >= 1")
        th.setflags(write=False)
        object.__setattr__(self, "thresholds", th)


def msprt_step(policy: MsprtPolicy, belief: Belief, k: int, loss=None) -> int:
    """Action at stage k: hypothesis index to accept, or WAIT (-1).

    The step cap forces the minimum-posterior-expected-loss acceptance, which
    requires the loss matrix.
    """
    hits = np.nonzero(belief.pi >= policy.thresholds)[0]
    if hits.size:
        return int(hits[0])
    if k >= policy.step_cap:
        if loss is None:
            raise ValueError("loss matrix required for the forced stop at the step cap")
        return int(np.argmin(belief.pi @ np.asarray(loss, dtype=float)))
    return WAIT


@dataclass(frozen=True)
class TuneResult:
    policy: MsprtPolicy
    cost: float
    stderr: float
    grid: np.ndarray
    combo_thresholds: np.ndarray  # (n_combos, N+1)
    combo_cost: np.ndarray
    combo_stderr: np.ndarray
    reps: int
    seed: int


def _cross_times(hs: HypothesisSet, grid: np.ndarray, reps: int, seed: int,
                 step_cap: int, backend) -> tuple:
    """First stage at which each posterior component reaches each grid value."""
    model = model_from_hypotheses(hs, build_diagnostic(hs), quad_nodes=8)
    streams = ReplicationStreams(hs.spec, hs.naturals, hs.prior, reps, seed)
    n_hyp = hs.n_hyp
    x0 = np.zeros(reps)
    x1 = np.zeros(reps)
    kk = np.zeros(reps, dtype=np.int64)
    alive = np.ones(reps, dtype=np.uint8)
    cross = np.full((reps, n_hyp, grid.size), -1, dtype=np.int32)
    ptr = np.zeros((reps, n_hyp), dtype=np.int32)
    forced = np.zeros(reps, dtype=np.int64)
    rounds = 0
    while True:
        active = np.nonzero(alive == 1)[0]
        if active.size == 0:
            break
        c = chunk_size(rounds)
        ys = streams.observations(active, c)
        inc = model.obs_increments(hs.spec, 0, ys)
        sub = (x0[active].copy(), x1[active].copy(), kk[active].copy(),
               alive[active].copy(), np.zeros(active.size, dtype=np.int64))
        sx0, sx1, skk, salive, sused = sub
        scross = np.ascontiguousarray(cross[active])
        sptr = np.ascontiguousarray(ptr[active])
        sforced = forced[active].copy()
        backend.msprt_cross_times(sx0, sx1, skk, salive, sused,
                                  np.ascontiguousarray(inc[..., 0]),
                                  np.ascontiguousarray(inc[..., 1]),
                                  model.lnprior, model.L2, model.cB,
                                  grid, step_cap, model.loss,
                                  scross, sptr, sforced)
        x0[active] = sx0
        x1[active] = sx1
        kk[active] = skk
        alive[active] = salive
        cross[active] = scross
        ptr[active] = sptr
        forced[active] = sforced
        rounds += 1
    return cross, forced, streams.truths


def msprt_tune(hs: HypothesisSet, grid=None, reps: int = 20_000,
               seed: int = 0, step_cap: int = DEFAULT_STEP_CAP,
               backend=None) -> TuneResult:
    """Best threshold combination over the grid by common-random-number search."""
    backend = backend or get_backend()
    grid = np.sort(np.asarray(grid if grid is not None else DEFAULT_THRESHOLD_GRID,
                              dtype=float))
    if np.any(grid <= 0.0) or np.any(grid >= 1.0):
        raise ValueError("threshold grid values must lie strictly in (0, 1)")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    n_hyp = hs.n_hyp
    cross, forced, truths = _cross_times(hs, grid, reps, seed, step_cap, backend)
    combos = np.array(list(itertools.product(range(grid.size), repeat=n_hyp)),
                      dtype=np.int32)
    out_sum = np.empty(len(combos))
    out_sumsq = np.empty(len(combos))
    backend.score_combos(cross, truths, combos, hs.loss, hs.obs_cost,
                         step_cap, forced, out_sum, out_sumsq)
    mean = out_sum / reps
    var = np.maximum(out_sumsq / reps - mean**2, 0.0)
    stderr = np.sqrt(var / reps)
    best = int(np.argmin(mean))
    policy = MsprtPolicy(thresholds=grid[combos[best]], step_cap=step_cap)
    return TuneResult(policy=policy, cost=float(mean[best]), stderr=float(stderr[best]),
                      grid=grid, combo_thresholds=grid[combos],
                      combo_cost=mean, combo_stderr=stderr, reps=reps, seed=seed)
