"""Shared helpers: random admissible parameters per family, scipy reference densities."""

from __future__ import annotations

import numpy as np
from scipy import stats

from seqdss import expfam


def make_spec(rng: np.random.Generator, family_id: str) -> expfam.FamilySpec:
    """A FamilySpec with randomly drawn (but sane) fixed structural constants."""
    if family_id == "binomial":
        return expfam.family("binomial", n=int(rng.integers(2, 12)))
    if family_id == "negative_binomial":
        return expfam.family("negative_binomial", size=float(rng.integers(1, 6)))
    if family_id == "pareto":
        return expfam.family("pareto", scale=float(rng.uniform(0.5, 2.0)))
    if family_id == "laplace_fixed_mean":
        return expfam.family("laplace_fixed_mean", loc=float(rng.uniform(-2.0, 2.0)))
    if family_id == "weibull_fixed_shape":
        return expfam.family("weibull_fixed_shape", shape=float(rng.uniform(0.8, 3.0)))
    if family_id == "normal_known_variance":
        return expfam.family("normal_known_variance", variance=float(rng.uniform(0.5, 3.0)))
    return expfam.family(family_id)


def random_alpha(rng: np.random.Generator, family_id: str) -> np.ndarray:
    draw = {
        "normal": lambda: [rng.uniform(-4, 4), rng.uniform(0.3, 4.0)],
        "normal_known_variance": lambda: [rng.uniform(-4, 4)],
        "poisson": lambda: [rng.uniform(0.3, 8.0)],
        "binomial": lambda: [rng.uniform(0.08, 0.92)],
        "bernoulli": lambda: [rng.uniform(0.08, 0.92)],
        "exponential": lambda: [rng.uniform(0.3, 4.0)],
        "geometric": lambda: [rng.uniform(0.1, 0.9)],
        "gamma": lambda: [rng.uniform(0.6, 5.0), rng.uniform(0.4, 4.0)],
        "beta": lambda: [rng.uniform(0.6, 5.0), rng.uniform(0.6, 5.0)],
        "negative_binomial": lambda: [rng.uniform(0.15, 0.85)],
        "rayleigh": lambda: [rng.uniform(0.4, 4.0)],
        "pareto": lambda: [rng.uniform(1.5, 6.0)],
        "chi_squared": lambda: [rng.uniform(1.0, 9.0)],
        "laplace_fixed_mean": lambda: [rng.uniform(0.4, 3.0)],
        "lognormal": lambda: [rng.uniform(-1.5, 1.5), rng.uniform(0.2, 1.5)],
        "weibull_fixed_shape": lambda: [rng.uniform(0.5, 3.0)],
    }[family_id]
    return np.asarray(draw(), dtype=float)


def distinct_alphas(rng: np.random.Generator, spec: expfam.FamilySpec, count: int) -> list:
    """Draw `count` parameter vectors whose natural parameterizations all differ."""
    found: list[np.ndarray] = []
    naturals: list[expfam.NaturalParam] = []
    while len(found) < count:
        a = random_alpha(rng, spec.family_id)
        th = expfam.to_natural(spec, a)
        if any(np.linalg.norm(th.eta - o.eta) <= 1e-6 and abs(th.logB - o.logB) <= 1e-6
               for o in naturals):
            continue
        found.append(a)
        naturals.append(th)
    return found


def scipy_logpdf(spec: expfam.FamilySpec, alpha: np.ndarray, y):
    """Closed-form reference log density, independent of the natural-form encoding."""
    fid = spec.family_id
    fx = spec.fixed_params
    a = np.asarray(alpha, dtype=float)
    if fid == "normal":
        return stats.norm(a[0], np.sqrt(a[1])).logpdf(y)
    if fid == "normal_known_variance":
        return stats.norm(a[0], np.sqrt(fx["variance"])).logpdf(y)
    if fid == "poisson":
        return stats.poisson(a[0]).logpmf(y)
    if fid == "binomial":
        return stats.binom(int(fx["n"]), a[0]).logpmf(y)
    if fid == "bernoulli":
        return stats.bernoulli(a[0]).logpmf(y)
    if fid == "exponential":
        return stats.expon(scale=1.0 / a[0]).logpdf(y)
    if fid == "geometric":
        return stats.geom(a[0], loc=-1).logpmf(y)
    if fid == "gamma":
        return stats.gamma(a[0], scale=1.0 / a[1]).logpdf(y)
    if fid == "beta":
        return stats.beta(a[0], a[1]).logpdf(y)
    if fid == "negative_binomial":
        return stats.nbinom(fx["size"], a[0]).logpmf(y)
    if fid == "rayleigh":
        return stats.rayleigh(scale=np.sqrt(a[0])).logpdf(y)
    if fid == "pareto":
        return stats.pareto(a[0], scale=fx["scale"]).logpdf(y)
    if fid == "chi_squared":
        return stats.chi2(a[0]).logpdf(y)
    if fid == "laplace_fixed_mean":
        return stats.laplace(fx["loc"], a[0]).logpdf(y)
    if fid == "lognormal":
        return stats.lognorm(np.sqrt(a[1]), scale=np.exp(a[0])).logpdf(y)
    if fid == "weibull_fixed_shape":
        return stats.weibull_min(fx["shape"], scale=a[0]).logpdf(y)
    raise KeyError(fid)
