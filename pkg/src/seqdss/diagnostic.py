"""Diagnostic matrix, its rank factorization, and belief reconstruction.

The diagnostic matrix stacks the natural-parameter differences between each
alternative hypothesis and the reference hypothesis (index 0).  Its rank r
is the intrinsic dimension of the posterior space reachable from any prior:
the running r-dimensional projection of the cumulative sufficient statistic
(the diagnostic sufficient statistic, DSS) determines the full posterior.

``bayes_update_direct`` is the plain Bayes-rule recursion on the belief
vector.  It is deliberately kept independent of the DSS machinery so the two
routes can be checked against each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from . import expfam
from .errors import DuplicateHypothesis, ZeroEvidence

__all__ = [
    "HypothesisSet",
    "DiagnosticFactorization",
    "DssState",
    "Belief",
    "build_diagnostic",
    "dss_update",
    "reconstruct_belief",
    "bayes_update_direct",
    "normal_zeta_values",
]

_SIMPLEX_TOL = 1e-12
_DISTINCT_TOL = 1e-12


@dataclass(frozen=True)
class HypothesisSet:
    """N+1 hypotheses over one family, with prior, loss matrix, observation costs."""

    spec: expfam.FamilySpec
    naturals: tuple[expfam.NaturalParam, ...]
    prior: np.ndarray
    loss: np.ndarray
    obs_cost: np.ndarray

    def __post_init__(self):
        n1 = len(self.naturals)
        if n1 < 2:
            raise ValueError("need at least two hypotheses")
        prior = np.asarray(self.prior, dtype=float)
        loss = np.asarray(self.loss, dtype=float)
        cost = np.asarray(self.obs_cost, dtype=float)
        if prior.shape != (n1,):
            raise ValueError(f"prior must have length {n1}, got shape {prior.shape}")
        if np.any(prior <= 0.0):
            raise ValueError("prior components must be strictly positive; "
                             "drop hypotheses with zero prior mass instead")
        if abs(prior.sum() - 1.0) > _SIMPLEX_TOL:
            raise ValueError(f"prior must sum to 1 within 1e-12, got {prior.sum()!r}")
        if loss.shape != (n1, n1):
            raise ValueError(f"loss must be {n1}x{n1}, got {loss.shape}")
        if np.any(loss < 0.0):
            raise ValueError("loss entries must be nonnegative")
        if np.any(np.diag(loss) != 0.0):
            raise ValueError("loss diagonal must be zero")
        if cost.shape != (n1,):
            raise ValueError(f"obs_cost must have length {n1}, got shape {cost.shape}")
        if np.any(cost < 0.0):
            raise ValueError("observation costs must be nonnegative")
        for arr in (prior, loss, cost):
            arr.setflags(write=False)
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "loss", loss)
        object.__setattr__(self, "obs_cost", cost)
        for i in range(n1):
            for j in range(i + 1, n1):
                de = np.linalg.norm(self.naturals[i].eta - self.naturals[j].eta)
                db = abs(self.naturals[i].logB - self.naturals[j].logB)
                if de <= _DISTINCT_TOL and db <= _DISTINCT_TOL:
                    raise DuplicateHypothesis(
                        f"hypotheses {i} and {j} have identical natural parameters")

    @classmethod
    def from_params(cls, spec, alphas, prior, loss, obs_cost) -> "HypothesisSet":
        naturals = tuple(expfam.to_natural(spec, a) for a in alphas)
        return cls(spec=spec, naturals=naturals, prior=np.asarray(prior, dtype=float),
                   loss=np.asarray(loss, dtype=float),
                   obs_cost=np.asarray(obs_cost, dtype=float))

    @property
    def n_hyp(self) -> int:
        return len(self.naturals)

    def eta_matrix(self) -> np.ndarray:
        return np.stack([th.eta for th in self.naturals])

    def logB_vector(self) -> np.ndarray:
        return np.array([th.logB for th in self.naturals])

    def relabeled(self, perm) -> "HypothesisSet":
        """Apply a permutation of hypothesis indices (index 0 must stay fixed)."""
        perm = np.asarray(perm)
        if perm[0] != 0:
            raise ValueError("reference hypothesis must keep index 0")
        return HypothesisSet(
            spec=self.spec,
            naturals=tuple(self.naturals[p] for p in perm),
            prior=self.prior[perm],
            loss=self.loss[np.ix_(perm, perm)],
            obs_cost=self.obs_cost[perm],
        )


@dataclass(frozen=True)
class DiagnosticFactorization:
    """H = L @ U with L full column rank, U full row rank; dB holds B_i - B_0."""

    H: np.ndarray
    L: np.ndarray
    U: np.ndarray
    rank: int
    dB: np.ndarray
    tol: float

    def __post_init__(self):
        for arr in (self.H, self.L, self.U, self.dB):
            np.asarray(arr).setflags(write=False)


@dataclass(frozen=True)
class DssState:
    """Diagnostic sufficient statistic after k observations; x is the zero vector at k=0."""

    x: np.ndarray
    k: int = 0

    @classmethod
    def initial(cls, rank: int) -> "DssState":
        return cls(x=np.zeros(rank), k=0)


@dataclass(frozen=True)
class Belief:
    """Posterior probabilities over the N+1 hypotheses."""

    pi: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)


def _rank_factorize(H: np.ndarray, tol: float):
    """Deterministic rank factorization via singular-value thresholding and
    column-pivoted QR of H^T; U comes out with orthonormal rows."""
    sv = np.linalg.svd(H, compute_uv=False)
    smax = sv[0] if sv.size else 0.0
    rank = int(np.sum(sv > tol * max(smax, 1.0)))
    if rank == 0:
        return np.zeros((H.shape[0], 0)), np.zeros((0, H.shape[1])), 0
    q, r, piv = scipy.linalg.qr(H.T, mode="economic", pivoting=True)
    U = q[:, :rank].T.copy()
    # canonical sign: largest-magnitude entry of each U row positive
    for d in range(rank):
        lead = U[d, np.argmax(np.abs(U[d]))]
        if lead < 0:
            U[d] = -U[d]
            r[d] = -r[d]
    L = np.empty((H.shape[0], rank))
    L[piv] = r[:rank].T
    return L, U, rank


def build_diagnostic(hs: HypothesisSet, tol: float = 1e-9) -> DiagnosticFactorization:
    """Assemble the diagnostic matrix from natural-parameter differences and factorize it."""
    eta = hs.eta_matrix()
    logB = hs.logB_vector()
    H = eta[1:] - eta[0]
    dB = logB[1:] - logB[0]
    scale = max(np.max(np.abs(H)), 1.0)
    for i in range(H.shape[0]):
        if np.max(np.abs(H[i])) <= tol * scale and abs(dB[i]) <= tol:
            raise DuplicateHypothesis(
                f"hypothesis {i + 1} is indistinguishable from the reference hypothesis")
        for j in range(i + 1, H.shape[0]):
            if np.max(np.abs(H[i] - H[j])) <= tol * scale and abs(dB[i] - dB[j]) <= tol:
                raise DuplicateHypothesis(
                    f"hypotheses {i + 1} and {j + 1} are indistinguishable")
    L, U, rank = _rank_factorize(H, tol)
    err = np.max(np.abs(L @ U - H)) if rank else np.max(np.abs(H), initial=0.0)
    if err > tol * max(1.0, np.max(np.abs(H))):
        raise ArithmeticError(f"rank factorization residual {err:.3e} exceeds tolerance")
    return DiagnosticFactorization(H=H, L=L, U=U, rank=rank, dB=dB, tol=tol)


def dss_update(fac: DiagnosticFactorization, spec: expfam.FamilySpec,
               state: DssState, y) -> DssState:
    """Absorb one observation: x' = x + U t(y), k' = k + 1."""
    t = expfam.suff_stat(spec, y)
    return DssState(x=state.x + fac.U @ t, k=state.k + 1)


def _reconstruct_logits(fac, prior, state):
    drift = fac.L @ state.x - state.k * fac.dB
    logits = np.empty(len(prior))
    logits[0] = np.log(prior[0])
    logits[1:] = np.log(prior[1:]) + drift
    return logits


def reconstruct_belief(fac: DiagnosticFactorization, hs: HypothesisSet,
                       state: DssState) -> Belief:
    """Posterior after k observations from the DSS alone (log-domain softmax)."""
    logits = _reconstruct_logits(fac, hs.prior, state)
    logits -= logits.max()
    w = np.exp(logits)
    return Belief(pi=w / w.sum())


def bayes_update_direct(hs: HypothesisSet, belief: Belief, y) -> Belief:
    """One step of the plain Bayes recursion on the belief vector (log-domain)."""
    t = expfam.suff_stat(hs.spec, y)
    loglik = hs.eta_matrix() @ t - hs.logB_vector()
    with np.errstate(divide="ignore"):
        logpost = np.log(belief.pi) + loglik
    norm = logsumexp(logpost)
    if not np.isfinite(norm):
        raise ZeroEvidence(f"observation {y!r} has zero likelihood under every hypothesis")
    return Belief(pi=np.exp(logpost - norm))


def normal_zeta_values(hs: HypothesisSet) -> np.ndarray:
    """Per-hypothesis collinearity ratios for the normal mean+variance case.

    Equal values across hypotheses signal that the two natural-parameter
    columns are linearly dependent, so the diagnostic statistic is scalar.
    Entries are +/-inf when the variances match the reference (pure mean
    shift).  Only defined for the two-parameter normal family.
    """
    if hs.spec.family_id != "normal":
        raise ValueError("collinearity ratios are defined for the 'normal' family only")
    mu = np.array([th.alpha[0] for th in hs.naturals])
    var = np.array([th.alpha[1] for th in hs.naturals])
    with np.errstate(divide="ignore", invalid="ignore"):
        zeta = (var[0] * mu[1:] - var[1:] * mu[0]) / (var[1:] - var[0])
    return zeta
