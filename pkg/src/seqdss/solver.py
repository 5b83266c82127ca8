"""Backward induction on per-stage diagnostic-statistic grids.

The solved object is a stack of per-stage value/action tables.  Stage k holds
the expected cost-to-go after k observations as a function of the diagnostic
statistic, computed by dynamic programming with a forced stop at the
truncation horizon; the horizon is doubled until the root value settles.

Storage convention shared with the kernel backends: stage k occupies
``vflat[voff[k]:voff[k+1]]`` row-major over a regular (n0, n1) grid with
geometry rows ``glo[k], gstep[k], gn[k]``.  Rank-1 problems use a degenerate
second dimension.  Action codes: j in 0..N accepts hypothesis j, N+1+a
continues with sampling mode a (the single mode is "wait" in the plain
stopping problem).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import expfam
from ._kernels import get_backend
from .diagnostic import DiagnosticFactorization, HypothesisSet
from .errors import HorizonNotConverged, RankTooHigh, StageOutOfRange

__all__ = [
    "SolverConfig",
    "ModelArrays",
    "StageGrid",
    "StageTable",
    "PolicyTable",
    "RegionSummary",
    "build_model",
    "solve",
    "acceptance_regions",
    "evaluate_policy_exact",
    "bellman_residual",
]

_LATTICE_MAX_FACTOR = 4


@dataclass(frozen=True)
class SolverConfig:
    """Resolution and truncation settings for the dynamic program."""

    horizon: int = 16
    grid_points_per_dim: Optional[int] = None  # None: 2001 in 1-D, 401 in 2-D
    grid_width_sigmas: float = 6.0
    quadrature_nodes: int = 64
    convergence_tol: float = 1e-4
    max_horizon: int = 512

    def __post_init__(self):
        if self.horizon < 1 or self.max_horizon < self.horizon:
            raise ValueError("need 1 <= horizon <= max_horizon")
        if self.grid_points_per_dim is not None and self.grid_points_per_dim < 2:
            raise ValueError("grid_points_per_dim must be >= 2")
        if self.grid_width_sigmas <= 0 or self.quadrature_nodes < 1:
            raise ValueError("grid_width_sigmas and quadrature_nodes must be positive")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")

    def points_for_rank(self, rank: int) -> int:
        if self.grid_points_per_dim is not None:
            return self.grid_points_per_dim
        return 2001 if rank == 1 else 401


@dataclass(frozen=True)
class ModelArrays:
    """Flat problem arrays consumed by the kernels (grid dimensions padded to 2).

    Belief logits at stage k, point x: lnprior[i] + L2[i-1] . x + k * cB[i-1]
    for i >= 1 and lnprior[0] for the reference hypothesis.  ``incr[a, i]``
    are the statistic increments at the quadrature nodes of hypothesis i
    under sampling mode a, with weights ``qw[a, i]`` (zero padded).
    """

    rank: int
    n_hyp: int
    n_modes: int
    lnprior: np.ndarray     # (N+1,)
    L2: np.ndarray          # (N, 2)
    cB: np.ndarray          # (N,)
    loss: np.ndarray        # (N+1, N+1)
    mode_cost: np.ndarray   # (N+1, K)
    incr: np.ndarray        # (K, N+1, Q, 2)
    qw: np.ndarray          # (K, N+1, Q)
    inc_mean: np.ndarray    # (K, N+1, 2)
    inc_var: np.ndarray     # (K, N+1, 2)
    proj: np.ndarray        # (K, r, M) statistic projection per mode
    proj_shift: np.ndarray  # (K, r) constant statistic drift per mode use
    discrete_step: Optional[float]
    action_labels: tuple

    def action_name(self, code: int) -> str:
        return self.action_labels[code]

    def obs_increments(self, spec, a: int, ys) -> np.ndarray:
        """Statistic increments, padded to 2 dims, for raw observations under mode a."""
        t = expfam.suff_stat(spec, np.asarray(ys, dtype=float))
        s = t @ self.proj[a].T + self.proj_shift[a]
        out = np.zeros(s.shape[:-1] + (2,))
        out[..., :s.shape[-1]] = s
        return out


@dataclass(frozen=True)
class StageGrid:
    k: int
    lo: np.ndarray
    step: np.ndarray
    n: np.ndarray

    @property
    def bounds(self) -> np.ndarray:
        hi = self.lo + self.step * (self.n - 1)
        return np.stack([self.lo, hi], axis=1)

    def axis(self, dim: int = 0) -> np.ndarray:
        return self.lo[dim] + self.step[dim] * np.arange(self.n[dim])


@dataclass(frozen=True)
class StageTable:
    grid: StageGrid
    value: np.ndarray
    action: np.ndarray


@dataclass(frozen=True)
class RegionSummary:
    """Acceptance-region description of one stage."""

    k: int
    rank: int
    labels: tuple                 # action-code -> name
    intervals: Optional[list]     # rank 1: [(code, lo, hi)] maximal runs
    breakpoints: Optional[np.ndarray]
    grid: StageGrid
    actions: np.ndarray


class PolicyTable:
    """Solved per-stage value grids, action labels and the root Bayes risk."""

    def __init__(self, model: ModelArrays, glo, gstep, gn, voff, vflat, aflat,
                 horizon: int, meta: dict):
        self.model = model
        self.glo = glo
        self.gstep = gstep
        self.gn = gn
        self.voff = voff
        self.vflat = vflat
        self.aflat = aflat
        self.horizon = int(horizon)
        self.meta = meta
        self.bayes_risk = float(vflat[voff[0]])

    @property
    def rank(self) -> int:
        return self.model.rank

    def _shape(self, k):
        n0, n1 = int(self.gn[k, 0]), int(self.gn[k, 1])
        return (n0,) if self.model.rank == 1 else (n0, n1)

    def grid(self, k: int) -> StageGrid:
        self._check_stage(k)
        r = self.model.rank
        return StageGrid(k=k, lo=self.glo[k, :r].copy(),
                         step=self.gstep[k, :r].copy(), n=self.gn[k, :r].copy())

    def value_at(self, k: int) -> np.ndarray:
        self._check_stage(k)
        return self.vflat[self.voff[k]:self.voff[k + 1]].reshape(self._shape(k))

    def actions_at(self, k: int) -> np.ndarray:
        self._check_stage(k)
        return self.aflat[self.voff[k]:self.voff[k + 1]].reshape(self._shape(k))

    @property
    def stages(self) -> list:
        return [StageTable(self.grid(k), self.value_at(k), self.actions_at(k))
                for k in range(self.horizon + 1)]

    def action_name(self, code: int) -> str:
        return self.model.action_name(code)

    def _check_stage(self, k):
        if not 0 <= k <= self.horizon:
            raise StageOutOfRange(f"stage {k} outside 0..{self.horizon}")


# ---------------------------------------------------------------------------
# model assembly
# ---------------------------------------------------------------------------


def _pad2(arr: np.ndarray) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(arr, dtype=float))
    out = np.zeros(arr.shape[:-1] + (2,))
    out[..., :arr.shape[-1]] = arr
    return out


def _lattice_spacing(incr, qw) -> Optional[float]:
    """Common spacing if every reachable increment sits on one integer lattice."""
    vals = np.unique(incr[..., 0][qw > 0])
    gaps = np.diff(vals)
    gaps = gaps[gaps > 1e-12]
    if gaps.size == 0:
        return None
    u = float(gaps.min())
    ratio = incr[..., 0][qw > 0] / u
    if np.all(np.abs(ratio - np.round(ratio)) < 1e-9):
        return u
    return None


def build_model(spec: expfam.FamilySpec, naturals_by_mode, prior, loss,
                mode_cost, proj, shift, drift_L, drift_const,
                quad_nodes: int, action_labels) -> ModelArrays:
    """Assemble the kernel arrays for a (possibly multi-mode) testing problem.

    proj[a] is the (r, M) projection applied to the natural statistic under
    mode a and shift[a] the constant statistic drift contributed by one use
    of mode a; drift_L (N, r) and drift_const (N,) define the belief logits.
    """
    n_modes = len(naturals_by_mode)
    n_hyp = len(naturals_by_mode[0])
    rank = proj[0].shape[0]
    per_mode = []
    maxq = 1
    for a in range(n_modes):
        per_hyp = []
        for i in range(n_hyp):
            nodes, w = expfam.integration_rule(spec, naturals_by_mode[a][i], quad_nodes)
            t = expfam.suff_stat(spec, nodes)
            s = t @ proj[a].T + shift[a]
            per_hyp.append((s, w))
            maxq = max(maxq, len(w))
        per_mode.append(per_hyp)
    incr = np.zeros((n_modes, n_hyp, maxq, 2))
    qw = np.zeros((n_modes, n_hyp, maxq))
    inc_mean = np.zeros((n_modes, n_hyp, 2))
    inc_var = np.zeros((n_modes, n_hyp, 2))
    for a in range(n_modes):
        for i in range(n_hyp):
            s, w = per_mode[a][i]
            q = len(w)
            incr[a, i, :q, :s.shape[1]] = s
            qw[a, i, :q] = w
            m = w @ incr[a, i, :q]
            inc_mean[a, i] = m
            inc_var[a, i] = np.maximum(w @ incr[a, i, :q] ** 2 - m * m, 0.0)
    discrete_step = _lattice_spacing(incr, qw) if (spec.discrete and rank == 1) else None
    return ModelArrays(
        rank=rank, n_hyp=n_hyp, n_modes=n_modes,
        lnprior=np.log(np.asarray(prior, dtype=float)),
        L2=_pad2(drift_L),
        cB=np.ascontiguousarray(drift_const, dtype=float),
        loss=np.ascontiguousarray(loss, dtype=float),
        mode_cost=np.ascontiguousarray(mode_cost, dtype=float),
        incr=incr, qw=qw, inc_mean=inc_mean, inc_var=inc_var,
        proj=np.stack([np.asarray(p, dtype=float) for p in proj]),
        proj_shift=np.stack([np.asarray(s, dtype=float) for s in shift]),
        discrete_step=discrete_step, action_labels=tuple(action_labels),
    )


def model_from_hypotheses(hs: HypothesisSet, fac: DiagnosticFactorization,
                          quad_nodes: int) -> ModelArrays:
    """Kernel arrays for the single-mode stopping problem."""
    labels = tuple(f"accept_{i}" for i in range(hs.n_hyp)) + ("wait",)
    return build_model(
        spec=hs.spec,
        naturals_by_mode=[hs.naturals],
        prior=hs.prior,
        loss=hs.loss,
        mode_cost=np.asarray(hs.obs_cost, dtype=float)[:, None],
        proj=[np.asarray(fac.U, dtype=float)],
        shift=[np.zeros(max(fac.rank, 1))],
        drift_L=fac.L if fac.rank else np.zeros((hs.n_hyp - 1, 1)),
        drift_const=-fac.dB,
        quad_nodes=quad_nodes,
        action_labels=labels,
    )


# ---------------------------------------------------------------------------
# grids and the backward sweep
# ---------------------------------------------------------------------------


def _stage_geometry(model: ModelArrays, cfg: SolverConfig, horizon: int):
    S = horizon
    glo = np.zeros((S + 1, 2))
    gstep = np.ones((S + 1, 2))
    gn = np.ones((S + 1, 2), dtype=np.int64)
    npts = cfg.points_for_rank(model.rank)
    w = cfg.grid_width_sigmas
    m_min = model.inc_mean.min(axis=(0, 1))
    m_max = model.inc_mean.max(axis=(0, 1))
    v_max = model.inc_var.max(axis=(0, 1))
    min_inc = model.incr.reshape(-1, 2).min(axis=0)
    u = model.discrete_step
    for k in range(1, S + 1):
        for d in range(model.rank):
            lo = k * m_min[d] - w * np.sqrt(k * v_max[d])
            hi = k * m_max[d] + w * np.sqrt(k * v_max[d])
            if u is not None and d == 0:
                jlo = int(np.floor(lo / u + 1e-9))
                jhi = int(np.ceil(hi / u - 1e-9))
                if min_inc[0] >= -1e-12:
                    jlo = max(jlo, 0)
                jhi = max(jhi, jlo + 1)
                if jhi - jlo + 1 <= _LATTICE_MAX_FACTOR * npts:
                    glo[k, d] = jlo * u
                    gstep[k, d] = u
                    gn[k, d] = jhi - jlo + 1
                    continue
            if hi - lo < 1e-9 * max(1.0, abs(lo)):
                hi = lo + 1e-9 * max(1.0, abs(lo))
            glo[k, d] = lo
            gstep[k, d] = (hi - lo) / (npts - 1)
            gn[k, d] = npts
    sizes = gn[:, 0] * gn[:, 1]
    voff = np.zeros(S + 2, dtype=np.int64)
    np.cumsum(sizes, out=voff[1:])
    return glo, gstep, gn, voff


def _solve_horizon(model: ModelArrays, cfg: SolverConfig, horizon: int, backend):
    glo, gstep, gn, voff = _stage_geometry(model, cfg, horizon)
    vflat = np.empty(voff[-1])
    aflat = np.empty(voff[-1], dtype=np.int64)
    for k in range(horizon, -1, -1):
        backend.sweep_stage(k, glo, gstep, gn, voff, vflat, aflat, horizon,
                            model.lnprior, model.L2, model.cB, model.loss,
                            model.mode_cost, model.incr, model.qw)
    return glo, gstep, gn, voff, vflat, aflat


def solve_model(model: ModelArrays, cfg: SolverConfig, backend=None) -> PolicyTable:
    """Horizon-doubling truncation: grow until the root value stops moving."""
    backend = backend or get_backend()
    if model.rank > 2:
        raise RankTooHigh(
            f"diagnostic statistic has rank {model.rank}; grids are supported "
            f"for rank 1 and 2 only")
    sweep = []
    horizon = cfg.horizon
    while True:
        storage = _solve_horizon(model, cfg, horizon, backend)
        root = float(storage[4][storage[3][0]])
        sweep.append((horizon, root))
        if len(sweep) >= 2 and abs(sweep[-1][1] - sweep[-2][1]) <= cfg.convergence_tol:
            break
        if horizon >= cfg.max_horizon:
            if len(sweep) == 1:
                break  # pinned single-horizon solve, nothing to compare against
            raise HorizonNotConverged(
                f"root value still moved {abs(sweep[-1][1] - sweep[-2][1]):.3e} "
                f"(> {cfg.convergence_tol}) at the horizon cap {cfg.max_horizon}")
        horizon = min(2 * horizon, cfg.max_horizon)
    glo, gstep, gn, voff, vflat, aflat = storage
    meta = {
        "backend": backend.NAME,
        "rank": model.rank,
        "horizon": horizon,
        "horizon_sweep": sweep,
        "config": {
            "horizon": cfg.horizon,
            "grid_points_per_dim": cfg.grid_points_per_dim,
            "grid_width_sigmas": cfg.grid_width_sigmas,
            "quadrature_nodes": cfg.quadrature_nodes,
            "convergence_tol": cfg.convergence_tol,
            "max_horizon": cfg.max_horizon,
        },
        "grid_kind": "lattice" if model.discrete_step is not None else "uniform",
        "action_labels": list(model.action_labels),
    }
    return PolicyTable(model, glo, gstep, gn, voff, vflat, aflat, horizon, meta)


def solve(hs: HypothesisSet, fac: DiagnosticFactorization,
          cfg: SolverConfig | None = None, backend=None) -> PolicyTable:
    """Solve the sequential testing problem on the diagnostic statistic."""
    cfg = cfg or SolverConfig()
    if fac.rank > 2:
        raise RankTooHigh(
            f"rank {fac.rank} exceeds the supported maximum 2 "
            f"(N={hs.n_hyp - 1}, M={hs.spec.M})")
    model = model_from_hypotheses(hs, fac, cfg.quadrature_nodes)
    return solve_model(model, cfg, backend=backend)


# ---------------------------------------------------------------------------
# derived views and checks
# ---------------------------------------------------------------------------


def acceptance_regions(pt: PolicyTable, k: int) -> RegionSummary:
    """Per-stage action regions: maximal intervals in 1-D, the label grid in 2-D."""
    grid = pt.grid(k)
    actions = pt.actions_at(k)
    labels = tuple(pt.model.action_labels)
    if pt.rank != 1:
        return RegionSummary(k=k, rank=pt.rank, labels=labels, intervals=None,
                             breakpoints=None, grid=grid, actions=actions)
    xs = grid.axis(0)
    acts = actions.ravel()
    runs = []
    start = 0
    for i in range(1, len(acts) + 1):
        if i == len(acts) or acts[i] != acts[start]:
            runs.append((int(acts[start]), float(xs[start]), float(xs[i - 1])))
            start = i
    breakpoints = np.array([0.5 * (runs[j][2] + runs[j + 1][1])
                            for j in range(len(runs) - 1)])
    return RegionSummary(k=k, rank=1, labels=labels, intervals=runs,
                         breakpoints=breakpoints, grid=grid, actions=actions)


def _corner_scatter(mass, q0, q1, lo0, st0, n0, lo1, st1, n1, out):
    """Adjoint of the kernels' clamped bilinear interpolation: deposit mass."""
    u0 = np.clip((q0 - lo0) / st0, 0.0, n0 - 1.0)
    u1 = np.clip((q1 - lo1) / st1, 0.0, n1 - 1.0)
    i0 = np.maximum(np.minimum(np.floor(u0).astype(np.int64), n0 - 2), 0)
    i1 = np.maximum(np.minimum(np.floor(u1).astype(np.int64), n1 - 2), 0)
    f0 = u0 - i0
    f1 = u1 - i1
    i0p = np.minimum(i0 + 1, n0 - 1)
    i1p = np.minimum(i1 + 1, n1 - 1)
    flat = out.ravel()
    size = out.size
    for idx, wgt in (
        (i0 * n1 + i1, mass * (1 - f0) * (1 - f1)),
        (i0 * n1 + i1p, mass * (1 - f0) * f1),
        (i0p * n1 + i1, mass * f0 * (1 - f1)),
        (i0p * n1 + i1p, mass * f0 * f1),
    ):
        flat += np.bincount(idx.ravel(), weights=wgt.ravel(), minlength=size)


def evaluate_policy_exact(pt: PolicyTable, hs: HypothesisSet | None = None) -> float:
    """Forward value of the stored policy under the prior.

    Pushes the reachable-statistic measure through the per-stage action
    tables.  Hypothesis mixing at every node uses the node's reconstructed
    beliefs and transitions use the transpose of the solver's interpolation,
    so the recursion is the exact adjoint of the backward sweep: the result
    must agree with the backward root value up to accumulated roundoff.
    """
    model = pt.model
    n_hyp = model.n_hyp
    total = 0.0
    mass = np.zeros(int(pt.gn[0, 0] * pt.gn[0, 1]))
    mass[0] = 1.0
    for k in range(pt.horizon + 1):
        acts = pt.aflat[pt.voff[k]:pt.voff[k + 1]]
        n0, n1 = int(pt.gn[k, 0]), int(pt.gn[k, 1])
        x0 = np.repeat(pt.glo[k, 0] + pt.gstep[k, 0] * np.arange(n0), n1)
        x1 = np.tile(pt.glo[k, 1] + pt.gstep[k, 1] * np.arange(n1), n0)
        drift = (x0[:, None] * model.L2[None, :, 0] + x1[:, None] * model.L2[None, :, 1]
                 + float(k) * model.cB[None, :])
        logits = np.empty((mass.size, n_hyp))
        logits[:, 0] = model.lnprior[0]
        logits[:, 1:] = model.lnprior[1:] + drift
        logits -= logits.max(axis=1, keepdims=True)
        T = np.exp(logits)
        T /= T.sum(axis=1, keepdims=True)
        stops = T @ model.loss
        for j in range(n_hyp):
            sel = acts == j
            if np.any(sel):
                total += float(mass[sel] @ stops[sel, j])
        if k == pt.horizon:
            break
        nn0, nn1 = int(pt.gn[k + 1, 0]), int(pt.gn[k + 1, 1])
        nxt = np.zeros((nn0, nn1))
        for a in range(model.n_modes):
            sel = acts == n_hyp + a
            if not np.any(sel):
                continue
            total += float(mass[sel] @ (T[sel] @ model.mode_cost[:, a]))
            for i in range(n_hyp):
                mi = mass[sel] * T[sel, i]
                if not np.any(mi):
                    continue
                w = model.qw[a, i]
                nz = w > 0
                q0 = x0[sel][:, None] + model.incr[a, i, nz, 0][None, :]
                q1 = x1[sel][:, None] + model.incr[a, i, nz, 1][None, :]
                contrib = mi[:, None] * w[nz][None, :]
                _corner_scatter(contrib, q0, q1,
                                pt.glo[k + 1, 0], pt.gstep[k + 1, 0], nn0,
                                pt.glo[k + 1, 1], pt.gstep[k + 1, 1], nn1, nxt)
        mass = nxt.ravel()
    return total


def bellman_residual(pt: PolicyTable, backend=None) -> float:
    """Max deviation when every stage is recomputed from the stored successor."""
    backend = backend or get_backend(pt.meta.get("backend"))
    model = pt.model
    scratch_v = pt.vflat.copy()
    scratch_a = pt.aflat.copy()
    worst = 0.0
    for k in range(pt.horizon + 1):
        backend.sweep_stage(k, pt.glo, pt.gstep, pt.gn, pt.voff, scratch_v,
                            scratch_a, pt.horizon, model.lnprior, model.L2,
                            model.cB, model.loss, model.mode_cost, model.incr,
                            model.qw)
        lo, hi = pt.voff[k], pt.voff[k + 1]
        worst = max(worst, float(np.max(np.abs(scratch_v[lo:hi] - pt.vflat[lo:hi]))))
    return worst
