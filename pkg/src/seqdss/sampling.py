"""Sequential testing with a per-period choice among sampling modes.

Each period the decision maker either accepts a hypothesis or picks one of K
sampling modes; mode a observes hypothesis i's distribution f_i^a and costs
mode_cost[i, a].  The diagnostic matrix gains one block of natural-parameter
differences and one log-normalizer-difference column per mode, and the
statistic tracks per-mode sufficient-statistic sums together with per-mode
use counts.

The dynamic program exploits that the stage index pins the total count: with
k = sum of mode counts known per stage, one count column folds into a
per-stage drift and the grid only spans the directions that genuinely vary
across histories of the same length.  With a single mode this reduction
recovers the plain stopping problem exactly, grids and all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expfam
from .diagnostic import Belief, _rank_factorize
from .errors import DuplicateHypothesis, RankTooHigh
from .solver import PolicyTable, SolverConfig, build_model, solve_model

__all__ = [
    "SamplingProblem",
    "SamplingFactorization",
    "SamplingDss",
    "build_sampling_diagnostic",
    "sampling_dss_update",
    "reconstruct_belief_s",
    "solve_sampling",
]

_SIMPLEX_TOL = 1e-12
_DISTINCT_TOL = 1e-12


@dataclass(frozen=True)
class SamplingProblem:
    """Hypotheses x modes parameter grid with prior, losses and mode costs.

    ``naturals[i][a]`` is hypothesis i's natural parameterization under
    sampling mode a; ``mode_cost[i, a]`` the per-period cost of mode a when
    hypothesis i is true.
    """

    spec: expfam.FamilySpec
    naturals: tuple          # (N+1) tuples of K NaturalParam
    prior: np.ndarray
    loss: np.ndarray
    mode_cost: np.ndarray

    def __post_init__(self):
        n1 = len(self.naturals)
        if n1 < 2:
            raise ValueError("need at least two hypotheses")
        K = len(self.naturals[0])
        if K < 1 or any(len(row) != K for row in self.naturals):
            raise ValueError("every hypothesis needs a parameter for every mode")
        prior = np.asarray(self.prior, dtype=float)
        loss = np.asarray(self.loss, dtype=float)
        cost = np.asarray(self.mode_cost, dtype=float)
        if prior.shape != (n1,) or np.any(prior <= 0.0):
            raise ValueError("prior must be strictly positive with one entry per hypothesis")
        if abs(prior.sum() - 1.0) > _SIMPLEX_TOL:
            raise ValueError(f"prior must sum to 1 within 1e-12, got {prior.sum()!r}")
        if loss.shape != (n1, n1) or np.any(loss < 0.0) or np.any(np.diag(loss) != 0.0):
            raise ValueError("loss must be square, nonnegative, zero on the diagonal")
        if cost.shape != (n1, K) or np.any(cost < 0.0):
            raise ValueError(f"mode_cost must be {n1}x{K} nonnegative")
        for arr in (prior, loss, cost):
            arr.setflags(write=False)
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "loss", loss)
        object.__setattr__(self, "mode_cost", cost)
        self._check_distinct()

    def _check_distinct(self):
        n1 = len(self.naturals)
        for i in range(n1):
            for j in range(i + 1, n1):
                same = all(
                    np.linalg.norm(self.naturals[i][a].eta - self.naturals[j][a].eta)
                    <= _DISTINCT_TOL
                    and abs(self.naturals[i][a].logB - self.naturals[j][a].logB)
                    <= _DISTINCT_TOL
                    for a in range(self.n_modes))
                if same:
                    raise DuplicateHypothesis(
                        f"hypotheses {i} and {j} share every mode's distribution")

    @classmethod
    def from_params(cls, spec, alphas_by_hyp, prior, loss, mode_cost) -> "SamplingProblem":
        naturals = tuple(
            tuple(expfam.to_natural(spec, a) for a in row) for row in alphas_by_hyp)
        return cls(spec=spec, naturals=naturals,
                   prior=np.asarray(prior, dtype=float),
                   loss=np.asarray(loss, dtype=float),
                   mode_cost=np.asarray(mode_cost, dtype=float))

    @property
    def n_hyp(self) -> int:
        return len(self.naturals)

    @property
    def n_modes(self) -> int:
        return len(self.naturals[0])

    def naturals_by_mode(self) -> list:
        return [[self.naturals[i][a] for i in range(self.n_hyp)]
                for a in range(self.n_modes)]


@dataclass(frozen=True)
class SamplingFactorization:
    """Hs = Ls @ Us over the stacked per-mode blocks; rank is the statistic dimension."""

    Hs: np.ndarray
    Ls: np.ndarray
    Us: np.ndarray
    rank: int
    tol: float

    def __post_init__(self):
        for arr in (self.Hs, self.Ls, self.Us):
            np.asarray(arr).setflags(write=False)


@dataclass(frozen=True)
class SamplingDss:
    """Projected statistic plus stage count; raw carries the unprojected sums."""

    xs: np.ndarray
    k: int = 0
    raw: np.ndarray | None = None

    @classmethod
    def initial(cls, fac: "SamplingFactorization") -> "SamplingDss":
        return cls(xs=np.zeros(fac.rank), k=0, raw=np.zeros(fac.Us.shape[1]))


def _eta_blocks(sp: SamplingProblem):
    M = sp.spec.M
    K = sp.n_modes
    N = sp.n_hyp - 1
    Ht = np.zeros((N, M * K))
    Hc = np.zeros((N, K))
    for a in range(K):
        for i in range(1, sp.n_hyp):
            Ht[i - 1, a * M:(a + 1) * M] = sp.naturals[i][a].eta - sp.naturals[0][a].eta
            Hc[i - 1, a] = sp.naturals[0][a].logB - sp.naturals[i][a].logB
    return Ht, Hc


def build_sampling_diagnostic(sp: SamplingProblem, tol: float = 1e-9) -> SamplingFactorization:
    """Stack per-mode natural-parameter differences and per-mode log-normalizer
    differences into the extended diagnostic matrix and rank factorize it."""
    Ht, Hc = _eta_blocks(sp)
    Hs = np.hstack([Ht, Hc])
    Ls, Us, rank = _rank_factorize(Hs, tol)
    return SamplingFactorization(Hs=Hs, Ls=Ls, Us=Us, rank=rank, tol=tol)


def sampling_dss_update(fac: SamplingFactorization, sp: SamplingProblem,
                        state: SamplingDss, mode: int, y) -> SamplingDss:
    """Absorb one observation taken under `mode` (0-based)."""
    K = sp.n_modes
    M = sp.spec.M
    if not 0 <= mode < K:
        raise ValueError(f"mode must lie in 0..{K - 1}, got {mode}")
    t = expfam.suff_stat(sp.spec, y)
    delta = np.zeros(M * K + K)
    delta[mode * M:(mode + 1) * M] = t
    delta[M * K + mode] = 1.0
    raw = None if state.raw is None else state.raw + delta
    return SamplingDss(xs=state.xs + fac.Us @ delta, k=state.k + 1, raw=raw)


def reconstruct_belief_s(fac: SamplingFactorization, sp: SamplingProblem,
                         state: SamplingDss) -> Belief:
    """Posterior over hypotheses from the sampling-control statistic alone."""
    logits = np.empty(sp.n_hyp)
    logits[0] = np.log(sp.prior[0])
    logits[1:] = np.log(sp.prior[1:]) + fac.Ls @ state.xs
    logits -= logits.max()
    w = np.exp(logits)
    return Belief(pi=w / w.sum())


def solve_sampling(sp: SamplingProblem, fac: SamplingFactorization,
                   cfg: SolverConfig | None = None, backend=None) -> PolicyTable:
    """Backward induction with a per-period mode choice.

    The stage index makes the last mode's use count redundant, so the grid
    state is the rank factorization of the stacked matrix with that count
    column folded into a per-stage drift; with one mode this is exactly the
    plain solver's state.
    """
    cfg = cfg or SolverConfig()
    if fac.rank > 2:
        raise RankTooHigh(
            f"sampling-control statistic has rank {fac.rank}; only ranks 1 and 2 "
            f"are solvable on grids")
    M = sp.spec.M
    K = sp.n_modes
    Ht, Hc = _eta_blocks(sp)
    reduced = np.hstack([Ht, Hc[:, :K - 1] - Hc[:, K - 1:K]]) if K > 1 else Ht
    L_red, U_red, r_red = _rank_factorize(reduced, fac.tol)
    r_red = max(r_red, 1)
    if L_red.shape[1] == 0:
        L_red = np.zeros((sp.n_hyp - 1, 1))
        U_red = np.zeros((1, reduced.shape[1]))
    proj = [U_red[:, a * M:(a + 1) * M] for a in range(K)]
    shift = [U_red[:, M * K + a] if a < K - 1 else np.zeros(r_red) for a in range(K)]
    labels = tuple(f"accept_{i}" for i in range(sp.n_hyp)) \
        + tuple(f"sample_{a + 1}" for a in range(K))
    model = build_model(
        spec=sp.spec,
        naturals_by_mode=sp.naturals_by_mode(),
        prior=sp.prior,
        loss=sp.loss,
        mode_cost=sp.mode_cost,
        proj=proj,
        shift=shift,
        drift_L=L_red,
        drift_const=Hc[:, K - 1],
        quad_nodes=cfg.quadrature_nodes,
        action_labels=labels,
    )
    pt = solve_model(model, cfg, backend=backend)
    pt.meta["statistic_rank"] = fac.rank
    pt.meta["grid_rank"] = r_red
    return pt
