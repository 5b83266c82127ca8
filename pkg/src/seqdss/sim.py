"""Monte Carlo evaluation of stopping policies.

Each replication r draws its true hypothesis and observation stream from the
generator seeded by (seed, r), steps the policy on the diagnostic statistic
until acceptance, and accrues per-period sampling costs plus the terminal
loss.  Paired comparisons rerun a second policy on the same per-replication
streams, so cost differences are free of between-policy sampling noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import get_backend
from ._streams import ReplicationStreams, chunk_size
from .diagnostic import HypothesisSet, build_diagnostic
from .errors import NonterminatingPolicy
from .msprt import MsprtPolicy
from .solver import PolicyTable, model_from_hypotheses

__all__ = ["SimulationReport", "PairedReport", "run_sim", "compare"]

SIM_STEP_CAP = 10_000


@dataclass(frozen=True)
class SimulationReport:
    policy_id: str
    replications: int
    seed: int
    mean_cost: float
    stderr: float
    ci95: tuple
    mean_stop_time: float
    accept_frequencies: np.ndarray
    per_truth: dict
    forced_stops: int
    costs: np.ndarray = field(repr=False)
    stop_times: np.ndarray = field(repr=False)
    decisions: np.ndarray = field(repr=False)
    truths: np.ndarray = field(repr=False)

    @property
    def ci_width(self) -> float:
        return self.ci95[1] - self.ci95[0]

    def summary_dict(self) -> dict:
        return {
            "policy_id": self.policy_id,
            "replications": self.replications,
            "seed": self.seed,
            "mean_cost": self.mean_cost,
            "stderr": self.stderr,
            "ci95_lo": self.ci95[0],
            "ci95_hi": self.ci95[1],
            "mean_stop_time": self.mean_stop_time,
            "forced_stops": self.forced_stops,
            "accept_frequencies": list(map(float, self.accept_frequencies)),
        }


@dataclass(frozen=True)
class PairedReport:
    optimal: SimulationReport
    msprt: SimulationReport
    diff_mean: float
    diff_stderr: float
    pct_loss: float


def _assemble(policy_id, seed, truths, costs, taus, acts, forced, n_hyp):
    reps = len(costs)
    mean = float(costs.mean())
    sd = float(costs.std(ddof=1)) if reps > 1 else 0.0
    se = sd / np.sqrt(reps)
    per_truth = {}
    for t in range(n_hyp):
        sel = truths == t
        cnt = int(sel.sum())
        if cnt == 0:
            continue
        ct = costs[sel]
        per_truth[t] = {
            "count": cnt,
            "mean_cost": float(ct.mean()),
            "stderr": float(ct.std(ddof=1) / np.sqrt(cnt)) if cnt > 1 else 0.0,
            "mean_stop_time": float(taus[sel].mean()),
            "accept_frequencies": (np.bincount(acts[sel], minlength=n_hyp) / cnt).tolist(),
        }
    return SimulationReport(
        policy_id=policy_id,
        replications=reps,
        seed=seed,
        mean_cost=mean,
        stderr=float(se),
        ci95=(mean - 1.96 * se, mean + 1.96 * se),
        mean_stop_time=float(taus.mean()),
        accept_frequencies=np.bincount(acts, minlength=n_hyp) / reps,
        per_truth=per_truth,
        forced_stops=int(forced.sum()),
        costs=costs,
        stop_times=taus.astype(float),
        decisions=acts,
        truths=truths,
    )


def _batched_advance(streams, model, spec, reps, advance, step_cap):
    """Drive a batched kernel over growing observation chunks until all stop."""
    x0 = np.zeros(reps)
    x1 = np.zeros(reps)
    kk = np.zeros(reps, dtype=np.int64)
    alive = np.ones(reps, dtype=np.uint8)
    acts = np.full(reps, -1, dtype=np.int64)
    forced = np.zeros(reps, dtype=np.uint8)
    rounds = 0
    while True:
        active = np.nonzero(alive == 1)[0]
        if active.size == 0:
            break
        if kk[active].min() > step_cap:
            raise NonterminatingPolicy(
                f"replications still running after {step_cap} observations")
        c = chunk_size(rounds)
        ys = streams.observations(active, c)
        inc = model.obs_increments(spec, 0, ys)
        sx0 = x0[active].copy()
        sx1 = x1[active].copy()
        skk = kk[active].copy()
        salive = alive[active].copy()
        sused = np.zeros(active.size, dtype=np.int64)
        sact = acts[active].copy()
        sforced = forced[active].copy()
        advance(sx0, sx1, skk, salive, sused,
                np.ascontiguousarray(inc[..., 0]), np.ascontiguousarray(inc[..., 1]),
                sact, sforced)
        x0[active] = sx0
        x1[active] = sx1
        kk[active] = skk
        alive[active] = salive
        acts[active] = sact
        forced[active] = sforced
        rounds += 1
    return kk, acts, forced


def _run_table_policy(hs: HypothesisSet, pt: PolicyTable, reps, seed, backend,
                      policy_id):
    model = pt.model
    streams = ReplicationStreams(hs.spec, hs.naturals, hs.prior, reps, seed)

    def advance(x0, x1, kk, alive, used, inc0, inc1, act, forced):
        backend.advance_policy(x0, x1, kk, alive, used, inc0, inc1,
                               pt.glo, pt.gstep, pt.gn, pt.voff, pt.vflat,
                               pt.horizon, model.lnprior, model.L2, model.cB,
                               model.loss, model.mode_cost, model.incr, model.qw,
                               act)

    taus, acts, forced = _batched_advance(streams, model, hs.spec, reps,
                                          advance, SIM_STEP_CAP)
    truths = streams.truths
    costs = taus * hs.obs_cost[truths] + hs.loss[truths, acts]
    return _assemble(policy_id, seed, truths, costs, taus, acts, forced, hs.n_hyp)


def _run_msprt_policy(hs: HypothesisSet, policy: MsprtPolicy, reps, seed,
                      backend, policy_id):
    model = model_from_hypotheses(hs, build_diagnostic(hs), quad_nodes=8)
    streams = ReplicationStreams(hs.spec, hs.naturals, hs.prior, reps, seed)

    def advance(x0, x1, kk, alive, used, inc0, inc1, act, forced):
        backend.advance_msprt(x0, x1, kk, alive, used, inc0, inc1,
                              model.lnprior, model.L2, model.cB,
                              policy.thresholds, model.loss, policy.step_cap,
                              act, forced)

    taus, acts, forced = _batched_advance(streams, model, hs.spec, reps,
                                          advance, max(SIM_STEP_CAP, policy.step_cap))
    truths = streams.truths
    costs = taus * hs.obs_cost[truths] + hs.loss[truths, acts]
    return _assemble(policy_id, seed, truths, costs, taus, acts, forced, hs.n_hyp)


def _run_sampling_policy(sp, pt: PolicyTable, reps, seed, backend, policy_id):
    """Lockstep stepping for mode-choice policies: one observation per active
    replication per step, drawn from the chosen mode's distribution."""
    model = pt.model
    naturals_by_mode = sp.naturals_by_mode()
    streams = ReplicationStreams(sp.spec, naturals_by_mode[0], sp.prior, reps, seed)
    truths = streams.truths
    x0 = np.zeros(reps)
    x1 = np.zeros(reps)
    alive = np.ones(reps, dtype=bool)
    acts = np.full(reps, -1, dtype=np.int64)
    taus = np.zeros(reps, dtype=np.int64)
    run_cost = np.zeros(reps)
    k = 0
    n_hyp = model.n_hyp
    while np.any(alive):
        if k > SIM_STEP_CAP:
            raise NonterminatingPolicy(
                f"replications still running after {SIM_STEP_CAP} observations")
        active = np.nonzero(alive)[0]
        val = np.empty(active.size)
        act = np.empty(active.size, dtype=np.int64)
        kk = np.full(active.size, k, dtype=np.int64)
        backend.eval_actions(x0[active], x1[active], kk, pt.glo, pt.gstep, pt.gn,
                             pt.voff, pt.vflat, pt.horizon, model.lnprior,
                             model.L2, model.cB, model.loss, model.mode_cost,
                             model.incr, model.qw, val, act)
        stop = act < n_hyp
        stopped = active[stop]
        acts[stopped] = act[stop]
        taus[stopped] = k
        alive[stopped] = False
        movers = active[~stop]
        modes = act[~stop] - n_hyp
        for r, a in zip(movers, modes):
            y = streams.observe_mode(r, naturals_by_mode, int(a))
            inc = model.obs_increments(sp.spec, int(a), np.array([y]))[0]
            x0[r] += inc[0]
            x1[r] += inc[1]
            run_cost[r] += sp.mode_cost[truths[r], a]
        k += 1
    costs = run_cost + sp.loss[truths, acts]
    forced = np.zeros(reps, dtype=np.uint8)
    return _assemble(policy_id, seed, truths, costs, taus, acts, forced, n_hyp)


def run_sim(problem, policy, reps: int, seed: int, policy_id: str | None = None,
            backend=None) -> SimulationReport:
    """Estimate the expected total cost of a policy by simulation."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    backend = backend or get_backend()
    if isinstance(policy, MsprtPolicy):
        return _run_msprt_policy(problem, policy, reps, seed, backend,
                                 policy_id or "msprt")
    if isinstance(policy, PolicyTable):
        if policy.model.n_modes == 1 and isinstance(problem, HypothesisSet):
            return _run_table_policy(problem, policy, reps, seed, backend,
                                     policy_id or "optimal")
        return _run_sampling_policy(problem, policy, reps, seed, backend,
                                    policy_id or "optimal_sampling")
    raise TypeError(f"unsupported policy type {type(policy).__name__}")


def compare(hs: HypothesisSet, optimal_table: PolicyTable, msprt_policy: MsprtPolicy,
            reps: int, seed: int, backend=None) -> PairedReport:
    """Paired (common-random-number) comparison of the solved policy and the baseline."""
    rep_opt = run_sim(hs, optimal_table, reps, seed, policy_id="optimal",
                      backend=backend)
    rep_msp = run_sim(hs, msprt_policy, reps, seed, policy_id="msprt",
                      backend=backend)
    diffs = rep_msp.costs - rep_opt.costs
    dm = float(diffs.mean())
    dse = float(diffs.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
    denom = rep_opt.mean_cost
    pct = 100.0 * dm / denom if denom != 0 else float("inf") if dm > 0 else 0.0
    return PairedReport(optimal=rep_opt, msprt=rep_msp, diff_mean=dm,
                        diff_stderr=dse, pct_loss=pct)
