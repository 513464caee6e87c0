"""Probabilistic model of the aggregate-load right tail.

High loads (at or above a cutoff ``L``) are modelled as i.i.d. draws from
the density ``kappa * (1 - x / L_bar)**alpha`` on ``[L, L_bar]``. Under a
flat new-load profile this yields the distribution of the curtailment
capacity ``C*_K`` in closed form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import DegenerateRange, DegenerateTail

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
MIN_TAIL_SAMPLES = 30
MIN_MC_TRIALS = 1000


@dataclass(frozen=True)
class TailModel:
    """Right-tail model; ``kappa`` follows from normalization."""

    L: float
    L_bar: float
    alpha: float
    T_L: int
    T: int | None = None

    def __post_init__(self):
        if not self.L < self.L_bar:
            raise DegenerateTail(f"cutoff {self.L} must be below the right endpoint {self.L_bar}")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")

    @property
    def kappa(self) -> float:
        a1 = self.alpha + 1.0
        return a1 / (self.L_bar * (1.0 - self.L / self.L_bar) ** a1)

    @property
    def beta_L(self) -> float:
        return self.T_L / self.T if self.T else float("nan")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.L) & (x <= self.L_bar)
        val = self.kappa * np.clip(1.0 - x / self.L_bar, 0.0, None) ** self.alpha
        return np.where(inside, val, 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        z = np.clip((self.L_bar - x) / (self.L_bar - self.L), 0.0, 1.0)
        return 1.0 - z ** (self.alpha + 1.0)

    def ppf(self, F):
        F = np.asarray(F, dtype=float)
        return self.L_bar - (self.L_bar - self.L) * (1.0 - F) ** (1.0 / (self.alpha + 1.0))

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "L_bar": self.L_bar,
            "alpha": self.alpha,
            "kappa": self.kappa,
            "T_L": self.T_L,
            "T": self.T,
            "beta_L": self.beta_L if self.T else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TailModel":
        return cls(float(d["L"]), float(d["L_bar"]), float(d["alpha"]), int(d["T_L"]), d.get("T"))


@dataclass(frozen=True)
class TailFit:
    model: TailModel
    method: str
    log_likelihood: float
    n_used: int
    extra: dict = field(default_factory=dict)


def golden_section_max(f, a: float, b: float, tol: float = 1e-8, max_iter: int = 500) -> float:
    """Maximizer of a unimodal ``f`` on ``[a, b]``."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _tail_sample(aggregate, cutoff_percentile, margin, L_bar=None):
    agg = np.asarray(aggregate, dtype=float).ravel()
    if agg.size == 0:
        raise DegenerateTail("empty aggregate series")
    if not 50 < cutoff_percentile < 100:
        raise ValueError("cutoff_percentile must lie in (50, 100)")
    L = float(np.percentile(agg, cutoff_percentile))
    top = float(agg.max())
    if L_bar is None:
        L_bar = top * (1.0 + margin)
    elif L_bar < top:
        raise ValueError("L_bar must not lie below the sample maximum")
    high = agg[agg >= L]
    if high.size < MIN_TAIL_SAMPLES:
        raise DegenerateTail(f"only {high.size} high-load samples (< {MIN_TAIL_SAMPLES})")
    if L >= top:
        raise DegenerateTail("cutoff equals the maximum load")
    return agg, L, L_bar, high


def tail_loglik(alpha: float, z: np.ndarray) -> float:
    """Log-likelihood of normalized gaps ``z = (L_bar - x)/(L_bar - L)`` in (0, 1]."""
    a1 = alpha + 1.0
    return z.size * math.log(a1) + alpha * float(np.sum(np.log(z)))


def fit_tail(
    aggregate,
    cutoff_percentile: float = 90.0,
    method: str = "mle",
    margin: float = 0.0,
    bins: int = 50,
    alpha_bounds=(1e-3, 50.0),
    L_bar: float | None = None,
) -> TailFit:
    """Fit the tail exponent to the high-load part of an aggregate series.

    ``L`` is the given percentile and ``L_bar`` the sample maximum (times
    ``1 + margin``) unless ``L_bar`` is given explicitly. Taking the sample
    maximum biases the exponent low, since the largest gaps to the endpoint
    are understated. ``method="mle"`` maximizes the likelihood over samples
    strictly below ``L_bar`` by golden-section search; ``method="hist"`` fits
    the density to a histogram by least squares.
    """
    agg, L, L_bar, high = _tail_sample(aggregate, cutoff_percentile, margin, L_bar)
    span = L_bar - L
    if method == "mle":
        used = high[high < L_bar]
        z = (L_bar - used) / span
        alpha = golden_section_max(lambda a: tail_loglik(a, z), *alpha_bounds)
        # add back the constant -n log(span) so the value is a density log-likelihood
        ll = tail_loglik(alpha, z) - z.size * math.log(span)
        model = TailModel(L, L_bar, alpha, int(high.size), int(agg.size))
        return TailFit(model, "mle", ll, int(z.size))
    if method == "hist":
        from scipy.optimize import curve_fit

        dens, edges = np.histogram(high, bins=bins, range=(L, L_bar), density=True)
        centers = 0.5 * (edges[:-1] + edges[1:])

        def f(x, kappa, alpha):
            return kappa * np.clip(1.0 - x / L_bar, 0.0, None) ** alpha

        a0 = 1.0
        k0 = (a0 + 1.0) / (L_bar * (1.0 - L / L_bar) ** (a0 + 1.0))
        (kappa, alpha), _ = curve_fit(f, centers, dens, p0=(k0, a0), bounds=([0, alpha_bounds[0]], [np.inf, alpha_bounds[1]]))
        model = TailModel(L, L_bar, float(alpha), int(high.size), int(agg.size))
        return TailFit(model, "hist", float("nan"), int(high.size), {"kappa_ls": float(kappa)})
    raise ValueError(f"unknown fit method {method!r}")


def binned_density(aggregate, model: TailModel, bins: int = 50):
    """Histogram of the high loads next to the model density (plot data)."""
    agg = np.asarray(aggregate, dtype=float)
    high = agg[agg >= model.L]
    counts, edges = np.histogram(high, bins=bins, range=(model.L, model.L_bar))
    width = edges[1] - edges[0]
    dens = counts / (high.size * width) if high.size else counts.astype(float)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, dens, model.pdf(centers)


def sample_tail(model: TailModel, n: int, seed) -> np.ndarray:
    """Inverse-CDF draws from the tail model."""
    rng = np.random.default_rng(seed)
    return model.ppf(rng.uniform(size=n))


def rho(model: TailModel, c: float, p0_max: float) -> float:
    """Probability that one high load exceeds ``p0_max - c``."""
    return float(1.0 - model.cdf(p0_max - c))


def _binom_cdf(K: int, n: int, p: float) -> float:
    if p <= 0.0:
        return 1.0
    if K >= n:
        return 1.0
    if p >= 1.0:
        return 0.0
    k = np.arange(K + 1)
    logpmf = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1) + k * math.log(p) + (n - k) * math.log1p(-p)
    return float(min(1.0, np.exp(logpmf).sum()))


def exact_tail_prob(model: TailModel, K: int, c: float, p0_max: float) -> float:
    """``P(C*_K > c)``: at most ``K`` of the ``T_L`` high loads exceed ``p0_max - c``."""
    return _binom_cdf(K, model.T_L, rho(model, c, p0_max))


def poisson_tail_prob(model: TailModel, K: int, c: float, p0_max: float) -> float:
    lam = model.T_L * rho(model, c, p0_max)
    if lam == 0.0:
        return 1.0
    k = np.arange(K + 1)
    return float(min(1.0, np.exp(k * math.log(lam) - lam - gammaln(k + 1)).sum()))


def expected_capacity(model: TailModel, K, p0_max: float, variant: str = "weibull", sample=None):
    """Approximate ``E[C*_K]``; ``K`` may be an array.

    ``weibull`` uses the tail-model closed form. ``empirical`` evaluates the
    inverse CDF at ``1 - (K+1)/(T_L+1)``, from ``sample`` (empirical
    quantile of the high loads) when one is given, else from the model.
    """
    K = np.asarray(K, dtype=float)
    q = (K + 1.0) / (model.T_L + 1.0)
    if variant == "weibull":
        return p0_max - model.L_bar + (model.L_bar - model.L) * q ** (1.0 / (model.alpha + 1.0))
    if variant == "empirical":
        if sample is None:
            return p0_max - model.ppf(1.0 - q)
        high = np.asarray(sample, dtype=float)
        high = high[high >= model.L]
        return p0_max - np.quantile(high, 1.0 - q)
    raise ValueError(f"unknown variant {variant!r}")


def marginal_gains(model: TailModel, K_max: int, p0_max: float) -> np.ndarray:
    """``g[j] = E[C*_{j+1}] - E[C*_j]`` for ``j = 0..K_max``."""
    if K_max > model.T_L - 2:
        raise ValueError("K_max must not exceed T_L - 2")
    e = expected_capacity(model, np.arange(K_max + 2), p0_max)
    return np.diff(e)


@dataclass(frozen=True)
class DepthReport:
    r: np.ndarray  # r[k-1] for k = 1..K
    normalized: np.ndarray
    gamma: np.ndarray
    holds: np.ndarray  # for k = 2..K-1

    @property
    def ok(self) -> bool:
        return bool(np.all(self.holds))

    @property
    def median_below_midpoint(self) -> bool:
        return bool(np.median(self.r) < 0.5 * (self.r.min() + self.r.max()))


def depth_requirements(model: TailModel, K: int, p0_max: float) -> DepthReport:
    """Expected curtailment of each of the ``K`` ranked interventions and the quantile check."""
    if K < 3:
        raise ValueError("K must be at least 3")
    e = expected_capacity(model, np.arange(K + 1), p0_max)
    r = e[K] - e[:K]  # r_k = E[C*_K] - E[C*_{k-1}]
    lo, hi = r.min(), r.max()
    if hi == lo:
        raise DegenerateRange("all expected curtailments are equal")
    norm = (r - lo) / (hi - lo)
    gamma = np.array([np.count_nonzero(r < rk) for rk in r]) / (K - 1)
    holds = norm[1:K - 1] < gamma[1:K - 1]
    return DepthReport(r, norm, gamma, holds)


# --------------------------------------------------------------------------
# Monte Carlo


def _trial_capacities(model: TailModel, p0_max: float, K_list, n_trials: int, seed: int) -> np.ndarray:
    """``C*_K`` per trial (rows) and ``K`` (columns) with per-trial seeds."""
    K_arr = np.asarray(K_list, dtype=int)
    out = np.empty((n_trials, K_arr.size))
    exp = 1.0 / (model.alpha + 1.0)
    span = model.L_bar - model.L
    for i in range(n_trials):
        u = np.random.default_rng([seed, i]).uniform(size=model.T_L)
        x = model.L_bar - span * (1.0 - u) ** exp
        kth = np.partition(x, model.T_L - 1 - K_arr)
        out[i] = p0_max - kth[model.T_L - 1 - K_arr]
    return out


def quantile_grid(model: TailModel, K: int, p0_max: float, probs=(0.1, 0.3, 0.5, 0.7, 0.9)) -> list[float]:
    """Capacities ``c`` at which ``P(C*_K > c)`` hits each target probability."""
    lo_c = p0_max - model.L_bar
    hi_c = p0_max - model.L
    out = []
    for p in probs:
        a, b = lo_c, hi_c
        for _ in range(200):
            m = 0.5 * (a + b)
            if exact_tail_prob(model, K, m, p0_max) > p:
                a = m
            else:
                b = m
        out.append(0.5 * (a + b))
    return out


@dataclass
class McCell:
    K: int
    c: float
    empirical: float
    exact: float
    poisson: float
    sigma: float

    @property
    def within_3sigma(self) -> bool:
        return abs(self.empirical - self.exact) <= 3.0 * self.sigma + 1e-12


@dataclass
class McReport:
    n_trials: int
    cells: list
    means: dict  # K -> (mc_mean, mc_stderr, E_empirical, E_weibull)

    @property
    def ok(self) -> bool:
        return all(c.within_3sigma for c in self.cells)

    def to_dict(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "ok": self.ok,
            "cells": [
                {"K": c.K, "c_kw": c.c, "empirical": c.empirical, "exact": c.exact, "poisson": c.poisson,
                 "sigma": c.sigma, "within_3sigma": c.within_3sigma}
                for c in self.cells
            ],
            "means": {str(k): dict(zip(("mc_mean", "mc_stderr", "E_empirical", "E_weibull"), v))
                      for k, v in self.means.items()},
        }


def monte_carlo_validate(model: TailModel, p0_max: float, K_list, c_list=None, n_trials: int = 10_000, seed: int = 0) -> McReport:
    """Compare sampled ``C*_K`` against the closed forms.

    ``c_list`` may be a flat list used for every ``K``, a dict ``K -> list``,
    or ``None`` to use :func:`quantile_grid` for each ``K``.
    """
    if n_trials < MIN_MC_TRIALS:
        warnings.warn(f"n_trials={n_trials} is below the recommended minimum of {MIN_MC_TRIALS}", stacklevel=2)
    K_list = [int(k) for k in K_list]
    caps = _trial_capacities(model, p0_max, K_list, n_trials, seed)
    cells = []
    means = {}
    for j, K in enumerate(K_list):
        if c_list is None:
            cs = quantile_grid(model, K, p0_max)
        elif isinstance(c_list, dict):
            cs = c_list[K]
        else:
            cs = c_list
        for c in cs:
            exact = exact_tail_prob(model, K, c, p0_max)
            emp = float(np.mean(caps[:, j] > c))
            sigma = math.sqrt(exact * (1.0 - exact) / n_trials)
            cells.append(McCell(K, float(c), emp, exact, poisson_tail_prob(model, K, c, p0_max), sigma))
        col = caps[:, j]
        means[K] = (
            float(col.mean()),
            float(col.std(ddof=1) / math.sqrt(n_trials)) if n_trials > 1 else float("nan"),
            float(expected_capacity(model, K, p0_max, "empirical")),
            float(expected_capacity(model, K, p0_max, "weibull")),
        )
    return McReport(n_trials, cells, means)
