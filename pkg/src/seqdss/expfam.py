"""Catalog of univariate exponential-family distributions.

Every family is expressed in the canonical form

    f(y; alpha) = h(y) * exp[ eta(alpha) . t(y) - B(alpha) ]

with natural parameter vector ``eta``, natural sufficient statistic ``t``,
log-normalizer ``B`` and carrier ``h``.  The carrier cancels in every
posterior ratio the rest of the package computes, but it is kept so that
``log_density`` can be validated against closed-form densities.

Families whose textbook parameterization carries an extra structural
constant (binomial trial count, Weibull shape, Laplace location, Pareto
scale, negative-binomial size, known normal variance) treat that constant
as a family-level fixed parameter shared by all hypotheses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special, stats

from .errors import InadmissibleParameter, OutOfSupport, UnsupportedFamily

__all__ = [
    "FAMILY_IDS",
    "FamilySpec",
    "NaturalParam",
    "family",
    "to_natural",
    "suff_stat",
    "log_carrier",
    "log_density",
    "sample",
    "integration_rule",
]

_DISCRETE_TOL = 1e-9
_TAIL_MASS = 1e-12


@dataclass(frozen=True)
class FamilySpec:
    """Identity of one exponential family plus its fixed structural constants."""

    family_id: str
    support: str
    M: int
    fixed_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family_id not in _REGISTRY:
            raise UnsupportedFamily(f"unknown family {self.family_id!r}")

    @property
    def discrete(self) -> bool:
        return _REGISTRY[self.family_id].discrete


@dataclass(frozen=True)
class NaturalParam:
    """Natural parameterization (eta, B) of one hypothesis, with the raw alpha kept."""

    eta: np.ndarray
    logB: float
    alpha: np.ndarray


class _Family:
    """Internal catalog row: closures for eta/B/t/h, sampling and quadrature."""

    def __init__(
        self,
        family_id: str,
        support: str,
        M: int,
        discrete: bool,
        fixed_names: tuple[str, ...],
        check_fixed: Callable,
        check_alpha: Callable,
        eta: Callable,
        logB: Callable,
        t: Callable,
        log_h: Callable,
        in_support: Callable,
        draw: Callable,
        rule: Callable,
    ):
        self.family_id = family_id
        self.support = support
        self.M = M
        self.discrete = discrete
        self.fixed_names = fixed_names
        self.check_fixed = check_fixed
        self.check_alpha = check_alpha
        self.eta = eta
        self.logB = logB
        self.t = t
        self.log_h = log_h
        self.in_support = in_support
        self.draw = draw
        self.rule = rule


def _positive(name):
    def check(v):
        if not np.isfinite(v) or v <= 0.0:
            raise InadmissibleParameter(f"{name} must be positive and finite, got {v}")

    return check


def _prob(name):
    def check(v):
        if not np.isfinite(v) or not 0.0 < v < 1.0:
            raise InadmissibleParameter(f"{name} must lie strictly in (0, 1), got {v}")

    return check


def _no_fixed(fixed):
    if fixed:
        raise InadmissibleParameter(f"unexpected fixed parameters {sorted(fixed)}")


def _alpha_len(n, check_each):
    def check(alpha, fixed):
        if alpha.shape != (n,):
            raise InadmissibleParameter(f"expected {n} parameter(s), got shape {alpha.shape}")
        if not np.all(np.isfinite(alpha)):
            raise InadmissibleParameter(f"parameters must be finite, got {alpha}")
        check_each(alpha, fixed)

    return check


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------


def _hermite_rule(n):
    # probabilist scaling: nodes for N(0,1), weights summing to one
    z, w = np.polynomial.hermite.hermgauss(n)
    return z * math.sqrt(2.0), w / w.sum()


def _laguerre_rule(n, shape=None):
    # weight u^shape * exp(-u) on [0, inf); normalized to a unit-mass rule
    if shape is None or shape == 0.0:
        u, w = special.roots_laguerre(n)
    else:
        u, w = special.roots_genlaguerre(n, shape)
    return u, w / w.sum()


def _jacobi_unit_rule(n, a, b):
    # beta(a, b) density on (0, 1) via Gauss-Jacobi on [-1, 1]
    x, w = special.roots_jacobi(n, b - 1.0, a - 1.0)
    return 0.5 * (x + 1.0), w / w.sum()


def _discrete_range(dist, lo_open=False):
    lo = int(dist.ppf(_TAIL_MASS / 2))
    hi = int(dist.isf(_TAIL_MASS / 2))
    lo = max(lo - 1, 0)
    hi = hi + 1
    ys = np.arange(lo, hi + 1, dtype=float)
    w = dist.pmf(ys)
    return ys, w


# ---------------------------------------------------------------------------
# support predicates (vectorized, return bool mask)
# ---------------------------------------------------------------------------


def _is_integral(y):
    return np.abs(y - np.round(y)) <= _DISCRETE_TOL


def _real_support(y, fixed):
    return np.isfinite(y)


def _nonneg_support(y, fixed):
    return np.isfinite(y) & (y >= 0.0)


def _positive_support(y, fixed):
    return np.isfinite(y) & (y > 0.0)


def _unit_support(y, fixed):
    return np.isfinite(y) & (y > 0.0) & (y < 1.0)


def _nonneg_int_support(y, fixed):
    return np.isfinite(y) & _is_integral(y) & (y >= -_DISCRETE_TOL)


def _registry():
    reg = {}

    def add(fam):
        reg[fam.family_id] = fam

    sqrt2pi_log = 0.5 * math.log(2.0 * math.pi)

    # -- normal: alpha = (mean, variance) ---------------------------------
    add(_Family(
        "normal", "real line", 2, False, (),
        _no_fixed,
        _alpha_len(2, lambda a, f: _positive("variance")(a[1])),
        lambda a, f: np.array([a[0] / a[1], -0.5 / a[1]]),
        lambda a, f: a[0] ** 2 / (2.0 * a[1]) + 0.5 * math.log(a[1]),
        lambda y, f: np.stack([y, y * y], axis=-1),
        lambda y, f: np.full_like(y, -sqrt2pi_log, dtype=float),
        _real_support,
        lambda rng, a, f, n: rng.normal(a[0], math.sqrt(a[1]), size=n),
        lambda a, f, n: (lambda z, w: (a[0] + math.sqrt(a[1]) * z, w))(*_hermite_rule(n)),
    ))

    # -- normal with known variance: alpha = (mean,) ----------------------
    def _nkv_logh(y, f):
        v = f["variance"]
        return -(y * y) / (2.0 * v) - sqrt2pi_log - 0.5 * math.log(v)

    add(_Family(
        "normal_known_variance", "real line", 1, False, ("variance",),
        lambda f: _positive("variance")(f["variance"]),
        _alpha_len(1, lambda a, f: None),
        lambda a, f: np.array([a[0] / f["variance"]]),
        lambda a, f: a[0] ** 2 / (2.0 * f["variance"]),
        lambda y, f: np.stack([y], axis=-1),
        _nkv_logh,
        _real_support,
        lambda rng, a, f, n: rng.normal(a[0], math.sqrt(f["variance"]), size=n),
        lambda a, f, n: (lambda z, w: (a[0] + math.sqrt(f["variance"]) * z, w))(*_hermite_rule(n)),
    ))

    # -- poisson: alpha = (rate,) ------------------------------------------
    add(_Family(
        "poisson", "nonnegative integers", 1, True, (),
        _no_fixed,
        _alpha_len(1, lambda a, f: _positive("rate")(a[0])),
        lambda a, f: np.array([math.log(a[0])]),
        lambda a, f: float(a[0]),
        lambda y, f: np.stack([y], axis=-1),
        lambda y, f: -special.gammaln(y + 1.0),
        _nonneg_int_support,
        lambda rng, a, f, n: rng.poisson(a[0], size=n).astype(float),
        lambda a, f, n: _discrete_range(stats.poisson(a[0])),
    ))

    # -- binomial: fixed trial count n, alpha = (p,) -----------------------
    def _binom_support(y, f):
        return _nonneg_int_support(y, f) & (y <= f["n"] + _DISCRETE_TOL)

    def _check_binom_fixed(f):
        n = f["n"]
        if not (isinstance(n, (int, np.integer)) or float(n).is_integer()) or n < 1:
            raise InadmissibleParameter(f"binomial trial count must be a positive integer, got {n}")

    add(_Family(
        "binomial", "integer lattice {0..n}", 1, True, ("n",),
        _check_binom_fixed,
        _alpha_len(1, lambda a, f: _prob("p")(a[0])),
        lambda a, f: np.array([math.log(a[0] / (1.0 - a[0]))]),
        lambda a, f: -f["n"] * math.log(1.0 - a[0]),
        lambda y, f: np.stack([y], axis=-1),
        lambda y, f: special.gammaln(f["n"] + 1.0) - special.gammaln(y + 1.0)
        - special.gammaln(f["n"] - y + 1.0),
        _binom_support,
        lambda rng, a, f, n: rng.binomial(int(f["n"]), a[0], size=n).astype(float),
        lambda a, f, n: (lambda ys: (ys, stats.binom(int(f["n"]), a[0]).pmf(ys)))(
            np.arange(0, int(f["n"]) + 1, dtype=float)),
    ))

    # -- bernoulli: alpha = (p,) -------------------------------------------
    add(_Family(
        "bernoulli", "integer lattice {0..n}", 1, True, (),
        _no_fixed,
        _alpha_len(1, lambda a, f: _prob("p")(a[0])),
        lambda a, f: np.array([math.log(a[0] / (1.0 - a[0]))]),
        lambda a, f: -math.log(1.0 - a[0]),
        lambda y, f: np.stack([y], axis=-1),
        lambda y, f: np.zeros_like(y, dtype=float),
        lambda y, f: _nonneg_int_support(y, f) & (y <= 1 + _DISCRETE_TOL),
        lambda rng, a, f, n: rng.binomial(1, a[0], size=n).astype(float),
        lambda a, f, n: (np.array([0.0, 1.0]), np.array([1.0 - a[0], a[0]])),
    ))

    # -- exponential: alpha = (rate,) --------------------------------------
    add(_Family(
        "exponential", "nonnegative reals", 1, False, (),
        _no_fixed,
        _alpha_len(1, lambda a, f: _positive("rate")(a[0])),
        lambda a, f: np.array([-a[0]]),
        lambda a, f: -math.log(a[0]),
        lambda y, f: np.stack([y], axis=-1),
        lambda y, f: np.zeros_like(y, dtype=float),
        _nonneg_support,
        lambda rng, a, f, n: rng.exponential(1.0 / a[0], size=n),
        lambda a, f, n: (lambda u, w: (u / a[0], w))(*_laguerre_rule(n)),
    ))

    # -- geometric (number of failures): alpha = (p,) ----------------------
    add(_Family(
        "geometric", "nonnegative integers", 1, True, (),
        _no_fixed,
        _alpha_len(1, lambda a, f: _prob("p")(a[0])),
        lambda a, f: np.array([math.log(1.0 - a[0])]),
        lambda a, f: -math.log(a[0]),
        lambda y, f: np.stack([y], axis=-1),
        lambda y, f: np.zeros_like(y, dtype=float),
        _nonneg_int_support,
        lambda rng, a, f, n: (rng.geometric(a[0], size=n) - 1).astype(float),
        lambda a, f, n: _discrete_range(stats.geom(a[0], loc=-1)),
    ))

    # -- gamma: alpha = (shape, rate) --------------------------------------
    # Catalog statistic is (-ln y, y); the first natural parameter must then
    # be 1 - shape for h(y) = 1 to reproduce the density.
    add(_Family(
        "gamma", "nonnegative reals", 2, False, (),
        _no_fixed,
        _alpha_len(2, lambda a, f: (_positive("shape")(a[0]), _positive("rate")(a[1]))),
        lambda a, f: np.array([1.0 - a[0], -a[1]]),
        lambda a, f: float(special.gammaln(a[0]) - a[0] * math.log(a[1])),
        lambda y, f: np.stack([-np.log(y), y], axis=-1),
        lambda y, f: np.zeros_like(y, dtype=float),
        _positive_support,
        lambda rng, a, f, n: rng.gamma(a[0], 1.0 / a[1], size=n),
        lambda a, f, n: (lambda u, w: (u / a[1], w))(*_laguerre_rule(n, a[0] - 1.0)),
    ))

    # -- beta: alpha = (a, b) ----------------------------------------------
    add(_Family(
        "beta", "unit interval", 2, False, (),
        _no_fixed,
        _alpha_len(2, lambda a, f: (_positive("a")(a[0]), _positive("b")(a[1]))),
        lambda a, f: np.array([a[0], a[1]]),
        lambda a, f: float(special.gammaln(a[0]) + special.gammaln(a[1])
                           - special.gammaln(a[0] + a[1])),
        lambda y, f: np.stack([np.log(y), np.log1p(-y)], axis=-1),
        lambda y, f: -np.log(y) - np.log1p(-y),
        _unit_support,
        lambda rng, a, f, n: rng.beta(a[0], a[1], size=n),
        lambda a, f, n: _jacobi_unit_rule(n, a[0], a[1]),
    ))

    # -- negative binomial (failures before `size` successes): alpha = (p,) -
    add(_Family(
        "negative_binomial", "nonnegative integers", 1, True, ("size",),
        lambda f: _positive("size")(f["size"]),
        _alpha_len(1, lambda a, f: _prob("p")(a[0])),
        lambda a, f: np.array([math.log(1.0 - a[0])]),
        lambda a, f: -f["size"] * math.log(a[0]),
        lambda y, f: np.stack([y], axis=-1),
        lambda y, f: special.gammaln(y + f["size"]) - special.gammaln(f["size"])
        - special.gammaln(y + 1.0),
        _nonneg_int_support,
        lambda rng, a, f, n: rng.negative_binomial(f["size"], a[0], size=n).astype(float),
        lambda a, f, n: _discrete_range(stats.nbinom(f["size"], a[0])),
    ))

    # -- rayleigh: alpha = (sigma_sq,) --------------------------------------
    # B must be ln(sigma_sq), not half of it, for h(y) = y to close the density.
    add(_Family(
        "rayleigh", "nonnegative reals", 1, False, (),
        _no_fixed,
        _alpha_len(1, lambda a, f: _positive("sigma_sq")(a[0])),
        lambda a, f: np.array([-0.5 / a[0]]),
        lambda a, f: math.log(a[0]),
        lambda y, f: np.stack([y * y], axis=-1),
        lambda y, f: np.log(y),
        _nonneg_support,
        lambda rng, a, f, n: rng.rayleigh(math.sqrt(a[0]), size=n),
        lambda a, f, n: (lambda u, w: (np.sqrt(2.0 * a[0] * u), w))(*_laguerre_rule(n)),
    ))

    # -- pareto: fixed scale, alpha = (tail_index,) --------------------------
    add(_Family(
        "pareto", "nonnegative reals", 1, False, ("scale",),
        lambda f: _positive("scale")(f["scale"]),
        _alpha_len(1, lambda a, f: _positive("tail index")(a[0])),
        lambda a, f: np.array([-a[0]]),
        lambda a, f: -math.log(a[0]) - a[0] * math.log(f["scale"]),
        lambda y, f: np.stack([np.log(y)], axis=-1),
        lambda y, f: -np.log(y),
        lambda y, f: np.isfinite(y) & (y >= f["scale"]),
        lambda rng, a, f, n: f["scale"] * (1.0 + rng.pareto(a[0], size=n)),
        lambda a, f, n: (lambda u, w: (f["scale"] * np.exp(u / a[0]), w))(*_laguerre_rule(n)),
    ))

    # -- chi squared: alpha = (dof,) -----------------------------------------
    add(_Family(
        "chi_squared", "nonnegative reals", 1, False, (),
        _no_fixed,
        _alpha_len(1, lambda a, f: _positive("dof")(a[0])),
        lambda a, f: np.array([a[0] / 2.0 - 1.0]),
        lambda a, f: float(special.gammaln(a[0] / 2.0) + (a[0] / 2.0) * math.log(2.0)),
        lambda y, f: np.stack([np.log(y)], axis=-1),
        lambda y, f: -0.5 * y,
        _positive_support,
        lambda rng, a, f, n: rng.chisquare(a[0], size=n),
        lambda a, f, n: (lambda u, w: (2.0 * u, w))(*_laguerre_rule(n, a[0] / 2.0 - 1.0)),
    ))

    # -- laplace with fixed location: alpha = (scale,) ------------------------
    def _laplace_rule(a, f, n):
        u, w = _laguerre_rule(max(n // 2, 1))
        loc = f["loc"]
        nodes = np.concatenate([loc - a[0] * u[::-1], loc + a[0] * u])
        weights = np.concatenate([0.5 * w[::-1], 0.5 * w])
        return nodes, weights

    add(_Family(
        "laplace_fixed_mean", "real line", 1, False, ("loc",),
        lambda f: None if np.isfinite(f["loc"]) else _positive("loc")(np.nan),
        _alpha_len(1, lambda a, f: _positive("scale")(a[0])),
        lambda a, f: np.array([-1.0 / a[0]]),
        lambda a, f: math.log(2.0 * a[0]),
        lambda y, f: np.stack([np.abs(y - f["loc"])], axis=-1),
        lambda y, f: np.zeros_like(y, dtype=float),
        _real_support,
        lambda rng, a, f, n: rng.laplace(f["loc"], a[0], size=n),
        _laplace_rule,
    ))

    # -- lognormal: alpha = (mu, sigma_sq) -------------------------------------
    add(_Family(
        "lognormal", "nonnegative reals", 2, False, (),
        _no_fixed,
        _alpha_len(2, lambda a, f: _positive("sigma_sq")(a[1])),
        lambda a, f: np.array([a[0] / a[1], -0.5 / a[1]]),
        lambda a, f: a[0] ** 2 / (2.0 * a[1]) + 0.5 * math.log(a[1]),
        lambda y, f: (lambda ly: np.stack([ly, ly * ly], axis=-1))(np.log(y)),
        lambda y, f: -sqrt2pi_log - np.log(y),
        _positive_support,
        lambda rng, a, f, n: rng.lognormal(a[0], math.sqrt(a[1]), size=n),
        lambda a, f, n: (lambda z, w: (np.exp(a[0] + math.sqrt(a[1]) * z), w))(*_hermite_rule(n)),
    ))

    # -- weibull with fixed shape: alpha = (scale,) ------------------------------
    add(_Family(
        "weibull_fixed_shape", "nonnegative reals", 1, False, ("shape",),
        lambda f: _positive("shape")(f["shape"]),
        _alpha_len(1, lambda a, f: _positive("scale")(a[0])),
        lambda a, f: np.array([-a[0] ** (-f["shape"])]),
        lambda a, f: f["shape"] * math.log(a[0]) - math.log(f["shape"]),
        lambda y, f: np.stack([y ** f["shape"]], axis=-1),
        lambda y, f: (f["shape"] - 1.0) * np.log(y),
        _positive_support,
        lambda rng, a, f, n: a[0] * rng.weibull(f["shape"], size=n),
        lambda a, f, n: (lambda u, w: (a[0] * u ** (1.0 / f["shape"]), w))(*_laguerre_rule(n)),
    ))

    return reg


_REGISTRY = _registry()
FAMILY_IDS = tuple(sorted(_REGISTRY))


def family(family_id: str, **fixed_params) -> FamilySpec:
    """Build a :class:`FamilySpec`, validating the fixed structural constants."""
    fam = _REGISTRY.get(family_id)
    if fam is None:
        raise UnsupportedFamily(f"unknown family {family_id!r}")
    missing = set(fam.fixed_names) - set(fixed_params)
    extra = set(fixed_params) - set(fam.fixed_names)
    if missing:
        raise InadmissibleParameter(f"{family_id} requires fixed parameter(s) {sorted(missing)}")
    if extra:
        raise InadmissibleParameter(f"{family_id} does not take fixed parameter(s) {sorted(extra)}")
    fixed = {k: float(v) for k, v in fixed_params.items()}
    fam.check_fixed(fixed)
    return FamilySpec(family_id, fam.support, fam.M, fixed)


def _fam(spec: FamilySpec) -> _Family:
    return _REGISTRY[spec.family_id]


def to_natural(spec: FamilySpec, alpha) -> NaturalParam:
    """Map a raw parameter vector to its (eta, B) natural coordinates."""
    fam = _fam(spec)
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    fam.check_alpha(a, spec.fixed_params)
    eta = fam.eta(a, spec.fixed_params)
    logB = float(fam.logB(a, spec.fixed_params))
    if not (np.all(np.isfinite(eta)) and np.isfinite(logB)):
        raise InadmissibleParameter(
            f"natural parameters are not finite for {spec.family_id} alpha={a}")
    a.setflags(write=False)
    eta.setflags(write=False)
    return NaturalParam(eta=eta, logB=logB, alpha=a)


def _check_support(spec: FamilySpec, y: np.ndarray):
    ok = _fam(spec).in_support(y, spec.fixed_params)
    if not np.all(ok):
        bad = np.asarray(y)[~np.asarray(ok, dtype=bool)]
        raise OutOfSupport(
            f"observation(s) {bad[:5]} outside {spec.family_id} support ({spec.support})")


def suff_stat(spec: FamilySpec, y) -> np.ndarray:
    """Natural sufficient statistic t(y); shape (M,) for scalar y, (n, M) for a vector."""
    arr = np.asarray(y, dtype=float)
    _check_support(spec, arr)
    return _fam(spec).t(arr, spec.fixed_params)


def log_carrier(spec: FamilySpec, y) -> np.ndarray:
    """ln h(y) for the family carrier measure."""
    arr = np.asarray(y, dtype=float)
    _check_support(spec, arr)
    return _fam(spec).log_h(arr, spec.fixed_params)


def log_density(spec: FamilySpec, theta: NaturalParam, y):
    """ln f(y) = ln h(y) + eta . t(y) - B.  Broadcasts over array-valued y."""
    arr = np.asarray(y, dtype=float)
    _check_support(spec, arr)
    fam = _fam(spec)
    t = fam.t(arr, spec.fixed_params)
    lh = fam.log_h(arr, spec.fixed_params)
    val = lh + t @ theta.eta - theta.logB
    return float(val) if arr.ndim == 0 else val


def sample(spec: FamilySpec, theta: NaturalParam, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw ``count`` iid observations; reproducible given the generator state."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return _fam(spec).draw(rng, theta.alpha, spec.fixed_params, int(count))


def integration_rule(spec: FamilySpec, theta: NaturalParam, node_count: int):
    """Nodes and weights integrating g against f: sum(w * g(nodes)) ~ E[g(Y)].

    Continuous families get a Gaussian rule adapted to the family (Hermite for
    normal-type supports, Laguerre/Jacobi otherwise) with ``node_count`` nodes.
    Discrete families enumerate their support exactly, truncating total tail
    mass below 1e-12; ``node_count`` is ignored for them.
    """
    if node_count < 1:
        raise ValueError(f"node_count must be >= 1, got {node_count}")
    fam = _fam(spec)
    nodes, weights = fam.rule(theta.alpha, spec.fixed_params, int(node_count))
    return np.asarray(nodes, dtype=float), np.asarray(weights, dtype=float)
