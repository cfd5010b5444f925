"""Seeded synthetic experiments.

Every harness is a deterministic function of its config and seed: data and
sampler seeds for each job are derived from ``(seed, job indices)`` with
:class:`numpy.random.SeedSequence`, so running jobs concurrently does not
change any number.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from horseshoe.elicitation import TauPrior, solve_tau_for_meff
from horseshoe.models import Dataset, PriorSpec, fit, posterior_meff, predictive_metrics
from horseshoe.sampler import SamplerConfig
from horseshoe.shrinkage import (
    BINOMIAL,
    ShrinkageContext,
    SlabSpec,
    pseudo_variance,
    tau_reference_identity,
)

logger = logging.getLogger(__name__)

# desk-scale sampler settings for the many-fit harnesses
TOY_SAMPLER = SamplerConfig(chains=2, warmup=200, samples=200)
SCALING_SAMPLER = SamplerConfig(chains=2, warmup=500, samples=500)
SEPARABLE_SAMPLER = SamplerConfig(chains=4, warmup=1000, samples=1000)
CORRELATED_SAMPLER = SamplerConfig(chains=2, warmup=500, samples=500)


def _seed(*parts) -> int:
    ss = np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts])
    return int(ss.generate_state(1)[0])


def _rng(*parts) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts]))


def _map(fn, jobs, workers):
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


# ---------------------------------------------------------------- toy


def toy_priors(n: int = 400, p_star: int = 20) -> dict[str, TauPrior]:
    """The three global-scale choices compared in the toy problem."""
    tau0 = tau_reference_identity(p_star, n, 1.0)
    return {
        "tau0": TauPrior.fixed(tau0, relative_to_sigma=True),
        "half_cauchy_tau0": TauPrior.half_cauchy(tau0, relative_to_sigma=True),
        "half_cauchy_1": TauPrior.half_cauchy(1.0),
    }


@dataclass(frozen=True)
class ToyConfig:
    """Sparse-means problem ``y = beta* + noise`` with identity design.

    ``A`` holds one or more signal levels; ``A = 0`` is accepted as the
    all-zero control.
    """

    A: tuple = (1.0, 2.0, 4.0, 6.0, 8.0, 10.0)
    n: int = 400
    p_star: int = 20
    replications: int = 20
    prior_variants: dict = field(default_factory=toy_priors)
    parameterization: str = "noncentered"

    def __post_init__(self):
        A = tuple(float(a) for a in np.atleast_1d(self.A))
        object.__setattr__(self, "A", A)
        if not A or any(not (a >= 0 and math.isfinite(a)) for a in A):
            raise ValueError("signal levels A must be finite and non-negative")
        if not 0 < self.p_star < self.n:
            raise ValueError("need 0 < p_star < n")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.prior_variants:
            raise ValueError("at least one prior variant is required")

    def to_dict(self) -> dict:
        return {"A": list(self.A), "n": self.n, "p_star": self.p_star,
                "replications": self.replications, "parameterization": self.parameterization,
                "prior_variants": {k: v.to_dict() for k, v in self.prior_variants.items()}}


def toy_data(n: int, p_star: int, A: float, rng: np.random.Generator):
    beta = np.zeros(n)
    beta[:p_star] = A
    return beta, beta + rng.standard_normal(n)


@dataclass
class ToyResult:
    """MSE per replication, indexed ``[A index, prior name] -> (R,) array``."""

    config: ToyConfig
    mse: dict
    divergent: dict
    seed: int

    def mean(self, A, prior) -> float:
        return float(np.mean(self.mse[(float(A), prior)]))

    def se(self, A, prior) -> float:
        v = self.mse[(float(A), prior)]
        return float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")

    def rows(self) -> list[dict]:
        out = []
        for (A, prior), v in self.mse.items():
            out.append({"A": A, "prior": prior, "mse_mean": self.mean(A, prior),
                        "mse_se": self.se(A, prior), "replications": int(v.size),
                        "divergent": int(self.divergent[(A, prior)])})
        return out

    def ordered(self, A, priors) -> bool:
        """Whether mean +- 2 SE bands are strictly increasing along ``priors``."""
        for lo, hi in zip(priors[:-1], priors[1:]):
            if not self.mean(A, lo) + 2 * self.se(A, lo) < self.mean(A, hi) - 2 * self.se(A, hi):
                return False
        return True


def run_toy(config: ToyConfig, sampler_cfg: SamplerConfig | None = None, seed: int = 0,
            workers: int = 1) -> ToyResult:
    """Posterior-mean MSE for each signal level, replication and prior.

    The noise sd is sampled under a log-uniform prior; the tau0 variants are
    expressed relative to it.
    """
    sampler_cfg = sampler_cfg or TOY_SAMPLER
    names = list(config.prior_variants)
    jobs = [(ia, r, ip) for ia in range(len(config.A)) for r in range(config.replications)
            for ip in range(len(names))]

    def job(j):
        ia, r, ip = j
        beta, y = toy_data(config.n, config.p_star, config.A[ia], _rng(seed, ia, r))
        prior = PriorSpec(config.prior_variants[names[ip]], intercept=False,
                          parameterization=config.parameterization)
        cfg = replace(sampler_cfg, seed=_seed(seed, ia, r, ip))
        res = fit(Dataset.identity(y), prior, cfg, diagnose=("tau", "sigma"))
        mse = float(np.mean((res.posterior_mean("beta") - beta) ** 2))
        return mse, res.diagnostics.n_divergent

    out = _map(job, jobs, workers)
    mse, div = {}, {}
    for (ia, r, ip), (m, d) in zip(jobs, out):
        key = (config.A[ia], names[ip])
        mse.setdefault(key, np.empty(config.replications))[r] = m
        div[key] = div.get(key, 0) + d
    return ToyResult(config, mse, div, seed)


@dataclass
class ScalingResult:
    """Posterior-mean m_eff keyed by ``(variant, data scale)``."""

    meff: dict
    seed: int

    @property
    def scaled_stable(self) -> bool:
        a, b = self.meff[("sigma_scaled", 1.0)], self.meff[("sigma_scaled", 0.1)]
        return abs(b - a) / a < 0.25

    @property
    def unscaled_inflated(self) -> bool:
        return self.meff[("unscaled", 0.1)] > 2.0 * self.meff[("unscaled", 1.0)]

    def rows(self) -> list[dict]:
        return [{"variant": v, "scale": s, "meff_mean": m} for (v, s), m in self.meff.items()]


def run_toy_scaling(seed: int = 0, sampler_cfg: SamplerConfig | None = None,
                    n: int = 400, p_star: int = 20, A: float = 10.0) -> ScalingResult:
    """Fit the same A=10 data at scale 1 and 0.1 with tau fixed absolutely or relative to sigma."""
    sampler_cfg = sampler_cfg or SCALING_SAMPLER
    _, y = toy_data(n, p_star, A, _rng(seed, 0))
    tau0 = tau_reference_identity(p_star, n, 1.0)
    variants = {"unscaled": TauPrior.fixed(tau0), "sigma_scaled": TauPrior.fixed(tau0, True)}
    meff = {}
    for iv, (name, tp) in enumerate(variants.items()):
        for scale in (1.0, 0.1):
            data = Dataset.identity(scale * y)
            cfg = replace(sampler_cfg, seed=_seed(seed, iv))
            res = fit(data, PriorSpec(tp, intercept=False), cfg, diagnose=("sigma",))
            meff[(name, scale)] = float(np.mean(posterior_meff(res.draws, data).values))
    return ScalingResult(meff, seed)


# ---------------------------------------------------------------- separable


def separable_variants() -> dict[str, tuple[float, SlabSpec]]:
    """(local dof, slab) for the four classification priors."""
    return {
        "hs_nu1": (1.0, SlabSpec.infinite()),
        "hs_nu3": (3.0, SlabSpec.infinite()),
        "rhs_c2": (1.0, SlabSpec.fixed(2.0)),
        "rhs_invgamma": (1.0, SlabSpec.inverse_gamma(2.0, 8.0)),
    }


@dataclass(frozen=True)
class SeparableConfig:
    n: int = 30
    D: int = 100
    relevant: int = 2
    class_mean_offset: float = 1.0
    feature_sd: float = 0.5
    p0: float = 2.0
    tau_dof: float = 3.0
    intercept_sd: float = 5.0
    variants: dict = field(default_factory=separable_variants)

    def __post_init__(self):
        if not 0 < self.relevant < self.D:
            raise ValueError("need 0 < relevant < D")
        if self.n < 2:
            raise ValueError("need at least two observations")
        if not self.feature_sd > 0:
            raise ValueError("feature_sd must be positive")

    def to_dict(self) -> dict:
        return {"n": self.n, "D": self.D, "relevant": self.relevant,
                "class_mean_offset": self.class_mean_offset, "feature_sd": self.feature_sd,
                "p0": self.p0, "tau_dof": self.tau_dof, "intercept_sd": self.intercept_sd,
                "variants": {k: {"local_dof": v[0], "slab": v[1].__dict__}
                             for k, v in self.variants.items()}}


def separable_data(config: SeparableConfig, seed: int, max_tries: int = 100) -> Dataset:
    """Two classes separated on the relevant features; the rest is N(0, 1) noise.

    A draw with a single class is discarded and the next sub-seed tried.
    """
    for attempt in range(max_tries):
        rng = _rng(seed, attempt)
        y = rng.integers(0, 2, config.n).astype(float)
        if 0 < y.sum() < config.n:
            break
        logger.info("separable data seed %d attempt %d had one class; regenerating",
                    seed, attempt)
    else:
        raise RuntimeError("could not generate two-class data")
    X = rng.standard_normal((config.n, config.D))
    sign = np.where(y == 1, 1.0, -1.0)[:, None]
    X[:, :config.relevant] = (sign * config.class_mean_offset
                              + config.feature_sd * rng.standard_normal((config.n, config.relevant)))
    return Dataset.from_raw(X, y, BINOMIAL, standardize_columns=False)


def _separates(x, y) -> bool:
    a, b = x[y == 1], x[y == 0]
    return a.min() > b.max() or b.min() > a.max()


def solitary_separator_seed(config: SeparableConfig, feature: int = 1, start: int = 0,
                            max_seed: int = 10_000) -> int:
    """First seed whose data are separated by ``feature`` alone and by no other
    relevant feature on its own."""
    for seed in range(start, max_seed):
        d = separable_data(config, seed)
        if all(_separates(d.X[:, j], d.y) == (j == feature) for j in range(config.relevant)):
            return seed
    raise RuntimeError("no seed with a solitary separator found")


def separable_tau0(config: SeparableConfig, local_dof: float) -> float:
    """Reference global scale under the balanced-class pseudo-sd of 2."""
    sigma = math.sqrt(pseudo_variance(BINOMIAL, 0.5))
    ctx = ShrinkageContext(config.n, config.D, sigma)
    return solve_tau_for_meff(config.p0, local_dof, ctx)


@dataclass
class VariantReport:
    beta_quantiles: dict
    abs_beta2_q99: float
    irrelevant_widths: np.ndarray
    divergence_fraction: float
    prob_beta2_positive: float
    tau0: float

    @property
    def median_irrelevant_width(self) -> float:
        return float(np.median(self.irrelevant_widths))

    def to_dict(self) -> dict:
        return {"beta_quantiles": self.beta_quantiles, "abs_beta2_q99": self.abs_beta2_q99,
                "median_irrelevant_width": self.median_irrelevant_width,
                "divergence_fraction": self.divergence_fraction,
                "prob_beta2_positive": self.prob_beta2_positive, "tau0": self.tau0}


QUANTILES = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)


def run_separable(config: SeparableConfig | None = None,
                  sampler_cfg: SamplerConfig | None = None, seed: int = 0,
                  workers: int = 1) -> dict[str, VariantReport]:
    """Logistic fits of one separable dataset under each prior variant.

    All variants share the sampler seed. Irrelevant-coefficient widths are
    central 80% intervals.
    """
    config = config or SeparableConfig()
    sampler_cfg = replace(sampler_cfg or SEPARABLE_SAMPLER, seed=_seed(seed, 1))
    data = separable_data(config, seed)
    names = list(config.variants)

    def job(name):
        local_dof, slab = config.variants[name]
        tau0 = separable_tau0(config, local_dof)
        prior = PriorSpec(TauPrior.half_t(config.tau_dof, tau0), local_dof=local_dof,
                          slab=slab, intercept_sd=config.intercept_sd)
        res = fit(data, prior, sampler_cfg, diagnose=("tau",))
        beta = res.draws.flat("beta")
        b1, b2 = beta[:, 0], beta[:, 1]
        lo, hi = np.quantile(beta[:, config.relevant:], [0.1, 0.9], axis=0)
        return VariantReport(
            beta_quantiles={"beta1": dict(zip(QUANTILES, np.quantile(b1, QUANTILES).tolist())),
                            "beta2": dict(zip(QUANTILES, np.quantile(b2, QUANTILES).tolist()))},
            abs_beta2_q99=float(np.quantile(np.abs(b2), 0.99)),
            irrelevant_widths=hi - lo,
            divergence_fraction=res.diagnostics.divergence_fraction,
            prob_beta2_positive=float(np.mean(b2 > 0)),
            tau0=tau0,
        )

    return dict(zip(names, _map(job, names, workers)))


# ---------------------------------------------------------------- correlated


def generate_correlated_classification(n: int, D: int, n_relevant: int,
                                       correlation_block_size: int, seed: int,
                                       rho: float = 0.7, n_test: int | None = None,
                                       signal: float = 2.0) -> tuple[Dataset, Dataset]:
    """Block-equicorrelated Gaussian features with sparse logistic responses.

    Features in a block share a common factor, giving pairwise correlation
    ``rho`` inside blocks and none across them. The first ``n_relevant``
    coefficients are ``+-signal``.
    """
    if not (0 < n_relevant <= D and correlation_block_size >= 1 and n >= 1):
        raise ValueError("inconsistent dimensions")
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    n_test = n if n_test is None else n_test
    rng = _rng(seed, 7)
    total = n + n_test
    n_blocks = -(-D // correlation_block_size)
    block = np.arange(D) // correlation_block_size
    shared = rng.standard_normal((total, n_blocks))
    X = math.sqrt(rho) * shared[:, block] + math.sqrt(1.0 - rho) * rng.standard_normal((total, D))
    beta = np.zeros(D)
    beta[:n_relevant] = signal * rng.choice([-1.0, 1.0], n_relevant)
    p = 1.0 / (1.0 + np.exp(-X @ beta))
    y = (rng.random(total) < p).astype(float)
    train = Dataset.from_raw(X[:n], y[:n], BINOMIAL, standardize_columns=False)
    test = Dataset.from_raw(X[n:], y[n:], BINOMIAL, standardize_columns=False)
    return train, test


def run_correlated(seed: int = 0, sampler_cfg: SamplerConfig | None = None, n: int = 100,
                   D: int = 200, n_relevant: int = 5, block: int = 10, p0: float = 5.0) -> dict:
    """Fit the regularized horseshoe to correlated data; report held-out metrics."""
    sampler_cfg = replace(sampler_cfg or CORRELATED_SAMPLER, seed=_seed(seed, 1))
    train, test = generate_correlated_classification(n, D, n_relevant, block, seed)
    sigma = math.sqrt(pseudo_variance(BINOMIAL, float(np.clip(train.y.mean(), 0.01, 0.99))))
    tau0 = solve_tau_for_meff(p0, 1.0, ShrinkageContext(n, D, sigma))
    prior = PriorSpec(TauPrior.half_t(3.0, tau0), slab=SlabSpec.student_t(4.0, 2.0))
    res = fit(train, prior, sampler_cfg, diagnose=("tau", "c"))
    out = predictive_metrics(res.draws, test)
    out.update(divergence_fraction=res.diagnostics.divergence_fraction, tau0=tau0,
               max_rhat=res.diagnostics.max_rhat(),
               meff_mean=float(np.mean(posterior_meff(res.draws, train).values)))
    return out
