"""Prior (and posterior) distribution of the effective number of nonzeros.

Drawing ``tau ~ p(tau)`` and local scales ``lambda_j ~ half-t(nu)`` and
summing ``1 - kappa_j`` gives draws of m_eff, which is how a global-scale
hyperprior is judged against a prior guess of the number of relevant
predictors.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from horseshoe.shrinkage import ShrinkageContext, meff_moments, tau_reference

BLOCK_SIZE = 1024


@dataclass(frozen=True)
class TauPrior:
    """Hyperprior on the global scale.

    ``kind`` is one of ``fixed``, ``half_normal``, ``half_cauchy``,
    ``half_t``. ``scale`` is the fixed value for ``fixed``. When
    ``relative_to_sigma`` is set, the scale is multiplied by the noise sd
    (the model treats sigma as unknown, so tau then moves with it).
    """

    kind: str
    scale: float
    dof: float | None = None
    relative_to_sigma: bool = False

    KINDS = ("fixed", "half_normal", "half_cauchy", "half_t")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown tau prior {self.kind!r}")
        if not self.scale > 0:
            raise ValueError("tau prior scale must be positive")
        if self.kind == "half_t" and (self.dof is None or not self.dof > 0):
            raise ValueError("half-t tau prior needs dof > 0")

    @classmethod
    def fixed(cls, value, relative_to_sigma=False):
        return cls("fixed", float(value), relative_to_sigma=relative_to_sigma)

    @classmethod
    def half_normal(cls, scale, relative_to_sigma=False):
        return cls("half_normal", float(scale), relative_to_sigma=relative_to_sigma)

    @classmethod
    def half_cauchy(cls, scale=1.0, relative_to_sigma=False):
        return cls("half_cauchy", float(scale), relative_to_sigma=relative_to_sigma)

    @classmethod
    def half_t(cls, dof, scale, relative_to_sigma=False):
        return cls("half_t", float(scale), float(dof), relative_to_sigma)

    @property
    def effective_dof(self) -> float:
        """Student-t degrees of freedom (inf for half-normal, 1 for half-Cauchy)."""
        return {"half_normal": math.inf, "half_cauchy": 1.0}.get(self.kind, self.dof)

    def scale_for(self, sigma: float) -> float:
        return self.scale * sigma if self.relative_to_sigma else self.scale

    def sample(self, rng: np.random.Generator, size: int, sigma: float = 1.0) -> np.ndarray:
        s = self.scale_for(sigma)
        if self.kind == "fixed":
            return np.full(size, s)
        return s * sample_half_t(rng, self.effective_dof, size)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "scale": self.scale, "dof": self.dof,
                "relative_to_sigma": self.relative_to_sigma}

    @classmethod
    def from_dict(cls, d: dict) -> "TauPrior":
        return cls(d["kind"], d["scale"], d.get("dof"), d.get("relative_to_sigma", False))


def sample_half_t(rng: np.random.Generator, dof: float, size) -> np.ndarray:
    """Half-Student-t(dof, 0, 1) draws as |normal| / sqrt(chi2_dof / dof)."""
    z = np.abs(rng.standard_normal(size))
    if math.isinf(dof):
        return z
    return z / np.sqrt(rng.chisquare(dof, size) / dof)


@dataclass(frozen=True)
class MeffDraws:
    values: np.ndarray
    context: ShrinkageContext
    tau_prior: TauPrior | None = None
    local_dof: float = 1.0
    seed: int | None = None
    tau: np.ndarray | None = None


def meff_given_scales(tau, lambdas, ctx: ShrinkageContext, sigma=None) -> np.ndarray:
    """m_eff for arrays of global scales ``(S,)`` and local scales ``(S, D)``."""
    sigma = ctx.sigma if sigma is None else np.asarray(sigma, dtype=float)
    tau = np.asarray(tau, dtype=float)
    a2 = (ctx.n * tau**2 / sigma**2)[..., None] * ctx.scales**2
    kappa = 1.0 / (1.0 + a2 * np.asarray(lambdas) ** 2)
    return np.sum(1.0 - kappa, axis=-1)


def _block(tau_prior, local_dof, ctx, seed, index, size):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, index]))
    tau = tau_prior.sample(rng, size, ctx.sigma)
    lam = sample_half_t(rng, local_dof, (size, ctx.D))
    return tau, meff_given_scales(tau, lam, ctx)


def sample_meff_prior(tau_prior: TauPrior, local_dof: float, ctx: ShrinkageContext,
                      n_draws: int, seed: int = 0, workers: int = 1) -> MeffDraws:
    """Monte Carlo draws of m_eff under the given global and local priors.

    Draws are generated in fixed blocks, each with its own RNG stream
    derived from ``(seed, block)``, so ``workers`` does not affect the output.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    if not local_dof > 0:
        raise ValueError("local_dof must be positive")
    sizes = [min(BLOCK_SIZE, n_draws - start) for start in range(0, n_draws, BLOCK_SIZE)]
    jobs = [(tau_prior, local_dof, ctx, seed, i, s) for i, s in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda j: _block(*j), jobs))
    else:
        parts = [_block(*j) for j in jobs]
    tau = np.concatenate([p[0] for p in parts])
    values = np.concatenate([p[1] for p in parts])
    return MeffDraws(values, ctx, tau_prior, local_dof, seed, tau)


def expected_shrinkage_complement(a: float, local_dof: float) -> float:
    """E[1 - kappa] for kappa = 1/(1 + a^2 lambda^2), lambda ~ half-t(local_dof)."""
    if local_dof == 1.0:
        return a / (1.0 + a)

    def integrand(lam):
        x = (a * lam) ** 2
        return x / (1.0 + x) * 2.0 * stats.t.pdf(lam, local_dof)

    # split at the point where the integrand turns over
    knee = 1.0 / a
    head, _ = integrate.quad(integrand, 0.0, knee, epsabs=1e-13, epsrel=1e-11, limit=200)
    tail, _ = integrate.quad(integrand, knee, np.inf, epsabs=1e-13, epsrel=1e-11, limit=200)
    return head + tail


def expected_meff(tau: float, local_dof: float, ctx: ShrinkageContext) -> float:
    if local_dof == 1.0:
        return meff_moments(tau, ctx)[0]
    a = ctx.a(tau)
    uniq, counts = np.unique(a, return_counts=True)
    return float(sum(c * expected_shrinkage_complement(float(u), local_dof)
                     for u, c in zip(uniq, counts)))


class BracketError(ValueError):
    pass


def solve_tau_for_meff(p0: float, local_dof: float, ctx: ShrinkageContext,
                       rtol: float = 1e-10) -> float:
    """Global scale whose prior mean of m_eff equals ``p0``.

    Bisection on log tau over ``[1e-8, 1e4] * sigma / sqrt(n)``; the mean is
    increasing in tau, so the bracket decides existence.
    """
    if not p0 > 0:
        raise ValueError("prior guess p0 must be positive")
    if p0 >= ctx.D:
        raise ValueError("prior guess must be below dimensionality")
    if local_dof == 1.0 and np.all(ctx.scales == 1.0):
        return tau_reference(p0, ctx)
    unit = ctx.sigma / math.sqrt(ctx.n)
    lo, hi = math.log(1e-8 * unit), math.log(1e4 * unit)
    f_lo = expected_meff(math.exp(lo), local_dof, ctx) - p0
    f_hi = expected_meff(math.exp(hi), local_dof, ctx) - p0
    if f_lo > 0 or f_hi < 0:
        raise BracketError(f"no tau in [{math.exp(lo):.3g}, {math.exp(hi):.3g}] gives "
                           f"E[m_eff] = {p0}")
    while hi - lo > rtol:
        mid = 0.5 * (lo + hi)
        if expected_meff(math.exp(mid), local_dof, ctx) < p0:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))


@dataclass(frozen=True)
class MeffSummary:
    mean: float
    sd: float
    quantiles: dict
    bin_edges: np.ndarray
    counts: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean, "sd": self.sd,
                "quantiles": {str(k): v for k, v in self.quantiles.items()},
                "histogram": {"edges": self.bin_edges.tolist(), "counts": self.counts.tolist()}}


def summarize_meff(draws: MeffDraws, quantiles=(0.05, 0.25, 0.5, 0.75, 0.95),
                   bins: int | None = None) -> MeffSummary:
    v = np.asarray(draws.values, dtype=float)
    if v.size == 0:
        raise ValueError("no m_eff draws to summarize")
    q = np.asarray(quantiles, dtype=float)
    if np.any((q < 0) | (q > 1)):
        raise ValueError("quantiles must lie in [0, 1]")
    D = draws.context.D
    bins = min(50, D + 1) if bins is None else bins
    counts, edges = np.histogram(v, bins=bins, range=(0.0, float(D)))
    return MeffSummary(
        mean=float(v.mean()),
        sd=float(v.std(ddof=1)) if v.size > 1 else 0.0,
        quantiles={float(k): float(x) for k, x in zip(q, np.quantile(v, q))},
        bin_edges=edges,
        counts=counts,
    )
