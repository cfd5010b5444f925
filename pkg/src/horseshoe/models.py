"""Shrinkage-prior GLMs on an unconstrained, non-centered parameterization.

Coefficients are ``beta_j = z_j * tau * lambda_tilde_j`` with ``z ~ N(0, 1)``;
positive scales are sampled on the log scale with Jacobian terms included.
The ``decomposed`` parameterization writes each half-t scale as a half-normal
times the square root of an inverse-gamma variable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, logsumexp

from horseshoe import _glm_kernel as K
from horseshoe.elicitation import MeffDraws, TauPrior, meff_given_scales
from horseshoe.sampler import CompiledTarget, PosteriorDraws, SamplerConfig, run_chains
from horseshoe.shrinkage import (
    GAUSSIAN,
    GlmFamily,
    ShrinkageContext,
    SlabSpec,
    lambda_tilde,
    pseudo_variance,
)

FAMILY_CODES = {"gaussian": K.GAUSSIAN, "binomial": K.BERNOULLI}


@dataclass(frozen=True)
class PriorSpec:
    """Full prior configuration for a shrinkage GLM.

    ``intercept_sd=inf`` gives a flat intercept prior; ``intercept=False``
    drops the intercept. The noise sd (Gaussian family only) has a
    log-uniform prior.
    """

    tau_prior: TauPrior
    local_dof: float = 1.0
    slab: SlabSpec = field(default_factory=SlabSpec.infinite)
    intercept: bool = True
    intercept_sd: float = 5.0
    parameterization: str = "noncentered"

    def __post_init__(self):
        if not self.local_dof > 0:
            raise ValueError("local_dof must be positive")
        if not self.intercept_sd > 0:
            raise ValueError("intercept_sd must be positive")
        if self.parameterization not in ("noncentered", "decomposed"):
            raise ValueError(f"unknown parameterization {self.parameterization!r}")

    def to_dict(self) -> dict:
        return {
            "tau_prior": self.tau_prior.to_dict(),
            "local_dof": self.local_dof,
            "slab": {"kind": self.slab.kind, "c": self.slab.c,
                     "alpha": self.slab.alpha, "beta": self.slab.beta},
            "intercept": self.intercept,
            "intercept_sd": self.intercept_sd,
            "parameterization": self.parameterization,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        return cls(tau_prior=TauPrior.from_dict(d["tau_prior"]),
                   local_dof=d["local_dof"], slab=SlabSpec(**d["slab"]),
                   intercept=d["intercept"], intercept_sd=d["intercept_sd"],
                   parameterization=d["parameterization"])


def standardize(X):
    """Center columns and scale to unit (population) sd; returns (Xs, means, sds)."""
    X = np.asarray(X, dtype=float)
    means = X.mean(axis=0)
    sds = X.std(axis=0)
    if np.any(sds == 0):
        bad = np.flatnonzero(sds == 0).tolist()
        raise ValueError(f"constant columns cannot be standardized: {bad}")
    return (X - means) / sds, means, sds


@dataclass(frozen=True)
class Dataset:
    """Design and targets. ``X=None`` denotes the identity design (n = D)."""

    X: np.ndarray | None
    y: np.ndarray
    family: GlmFamily = GAUSSIAN
    standardized: bool = False
    column_means: np.ndarray | None = None
    column_sds: np.ndarray | None = None
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=float)
        object.__setattr__(self, "y", y)
        if self.family.name not in FAMILY_CODES:
            raise ValueError(f"fitting is supported for gaussian and binomial families, "
                             f"not {self.family.name}")
        if self.X is not None:
            X = np.ascontiguousarray(self.X, dtype=float)
            if X.ndim != 2 or X.shape[0] != y.size:
                raise ValueError("X must be an (n, D) matrix matching y")
            object.__setattr__(self, "X", X)
        if self.family.name == "binomial" and not np.all((y == 0) | (y == 1)):
            raise ValueError("binomial targets must be 0 or 1")
        if not np.all(np.isfinite(y)):
            raise ValueError("targets must be finite")

    @classmethod
    def from_raw(cls, X, y, family=GAUSSIAN, standardize_columns=True, names=None):
        X = np.asarray(X, dtype=float)
        if standardize_columns and X.shape[1] > 0:
            Xs, m, s = standardize(X)
            return cls(Xs, y, family, True, m, s, names)
        return cls(X, y, family, False, None, None, names)

    @classmethod
    def identity(cls, y, family=GAUSSIAN):
        return cls(None, y, family)

    @property
    def identity_design(self) -> bool:
        return self.X is None

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def D(self) -> int:
        return self.y.size if self.X is None else self.X.shape[1]

    def design(self) -> np.ndarray:
        return np.eye(self.n) if self.X is None else self.X

    def shrinkage_context(self, sigma: float = 1.0) -> ShrinkageContext:
        """Context whose ``n * s_j^2`` matches the diagonal of ``X^T X / n``-scaled design."""
        if self.X is None:
            return ShrinkageContext(1, self.D, sigma)
        sds = self.X.std(axis=0)
        sds = np.where(sds > 0, sds, 1e-12)
        return ShrinkageContext(self.n, self.D, sigma, sds)

    def transform_new(self, X_raw) -> np.ndarray:
        """Apply this dataset's standardization to new raw inputs."""
        X_raw = np.asarray(X_raw, dtype=float)
        if not self.standardized:
            return X_raw
        return (X_raw - self.column_means) / self.column_sds

    def subset(self, rows) -> "Dataset":
        X = None if self.X is None else self.X[rows]
        return replace(self, X=X, y=self.y[rows])


@dataclass
class ModelParams:
    """Unconstrained parameters, one field per block.

    With the decomposed parameterization ``log_lambda``/``log_tau`` hold the
    half-normal factors and the ``*_aux`` fields the inverse-gamma factors.
    """

    z: np.ndarray
    log_lambda: np.ndarray | None = None
    log_tau: float | None = None
    log_c2: float | None = None
    beta0: float | None = None
    log_sigma: float | None = None
    log_lambda_aux: np.ndarray | None = None
    log_tau_aux: float | None = None


BLOCKS = ("z", "log_lambda", "log_lambda_aux", "log_tau", "log_tau_aux",
          "log_c2", "beta0", "log_sigma")


class GlmModel:
    """Log posterior of a shrinkage GLM, with optional clamped scales.

    ``fixed_lambdas`` and ``fixed_sigma`` remove the local scales or the noise
    sd from the sampled parameters (a fixed ``tau`` is expressed through a
    ``fixed`` tau prior).
    """

    def __init__(self, data: Dataset, prior: PriorSpec, fixed_lambdas=None, fixed_sigma=None):
        self.data = data
        self.prior = prior
        D = data.D
        gaussian = data.family.name == "gaussian"
        decomposed = prior.parameterization == "decomposed"
        tp = prior.tau_prior
        if tp.relative_to_sigma and not gaussian:
            raise ValueError("a sigma-relative tau prior needs the gaussian family")

        sizes = {"z": D}
        if fixed_lambdas is None:
            sizes["log_lambda"] = D
            if decomposed:
                sizes["log_lambda_aux"] = D
        if tp.kind != "fixed":
            sizes["log_tau"] = 1
            if decomposed and not math.isinf(tp.effective_dof):
                sizes["log_tau_aux"] = 1
        if prior.slab.kind == "inverse_gamma":
            sizes["log_c2"] = 1
        if prior.intercept:
            sizes["beta0"] = 1
        if gaussian and fixed_sigma is None:
            sizes["log_sigma"] = 1

        self.slices = {}
        start = 0
        for name in BLOCKS:
            if name in sizes:
                self.slices[name] = slice(start, start + sizes[name])
                start += sizes[name]
        self.dim = start

        def off(name):
            return self.slices[name].start if name in self.slices else -1

        offsets = np.array([off("z"), off("log_lambda"), off("log_lambda_aux"), off("log_tau"),
                            off("log_tau_aux"), off("log_c2"), off("beta0"), off("log_sigma")],
                           dtype=np.int64)
        lam_fixed = (np.ones(D) if fixed_lambdas is None
                     else np.ascontiguousarray(fixed_lambdas, dtype=float))
        if fixed_lambdas is not None and (lam_fixed.shape != (D,) or np.any(lam_fixed <= 0)):
            raise ValueError("fixed_lambdas must be D positive values")
        X = np.zeros((0, 0)) if data.X is None else data.X
        self.fixed_lambdas = None if fixed_lambdas is None else lam_fixed
        self.fixed_sigma = fixed_sigma
        slab = prior.slab
        self.args = (
            X, data.y, data.X is None, FAMILY_CODES[data.family.name], D,
            float(prior.local_dof), lam_fixed,
            K.TAU_FIXED if tp.kind == "fixed" else K.TAU_HALF_T,
            float(tp.scale), float(tp.effective_dof or 1.0), bool(tp.relative_to_sigma),
            {"infinite": K.SLAB_INFINITE, "fixed": K.SLAB_FIXED,
             "inverse_gamma": K.SLAB_INV_GAMMA}[slab.kind],
            float(slab.c or 1.0), float(slab.alpha or 1.0), float(slab.beta or 1.0),
            float(prior.intercept_sd),
            float(fixed_sigma if fixed_sigma is not None else 1.0),
            decomposed, offsets,
        )
        self.target = CompiledTarget(K.glm_logp_grad, self.args, self.dim)

    def logp_grad(self, theta) -> tuple[float, np.ndarray]:
        theta = np.ascontiguousarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"expected a vector of length {self.dim}")
        lp, grad = K.glm_logp_grad(theta, self.args)
        return float(lp), grad

    def pack(self, params: ModelParams) -> np.ndarray:
        theta = np.empty(self.dim)
        for name, sl in self.slices.items():
            value = getattr(params, name)
            if value is None:
                raise ValueError(f"parameter block {name!r} is required by this model")
            theta[sl] = value
        return theta

    def unpack(self, theta) -> ModelParams:
        theta = np.asarray(theta, dtype=float)
        kw = {}
        for name, sl in self.slices.items():
            v = theta[..., sl]
            vector = name in ("z", "log_lambda", "log_lambda_aux")
            kw[name] = v if vector else v[..., 0]
        return ModelParams(**kw)

    def random_params(self, rng: np.random.Generator) -> ModelParams:
        return self.unpack(rng.uniform(-2.0, 2.0, self.dim))

    def constrain(self, theta) -> dict[str, np.ndarray]:
        """Constrained values for an ``(..., dim)`` array of unconstrained draws."""
        theta = np.asarray(theta, dtype=float)
        batch = theta.shape[:-1]
        sl = self.slices
        D = self.data.D
        tp = self.prior.tau_prior
        out = {}

        if "log_sigma" in sl:
            sigma = np.exp(theta[..., sl["log_sigma"].start])
        elif self.data.family.name == "gaussian":
            sigma = np.full(batch, float(self.fixed_sigma))
        else:
            sigma = None
        if "log_lambda" not in sl:
            lam = np.broadcast_to(self.fixed_lambdas, batch + (D,))
        elif "log_lambda_aux" in sl:
            lam = np.exp(theta[..., sl["log_lambda"]] + 0.5 * theta[..., sl["log_lambda_aux"]])
        else:
            lam = np.exp(theta[..., sl["log_lambda"]])
        if tp.kind == "fixed":
            tau = np.full(batch, tp.scale) * (sigma if tp.relative_to_sigma else 1.0)
        elif "log_tau_aux" in sl:
            tau = np.exp(theta[..., sl["log_tau"].start] + 0.5 * theta[..., sl["log_tau_aux"].start])
        else:
            tau = np.exp(theta[..., sl["log_tau"].start])
        slab = self.prior.slab
        if slab.kind == "inverse_gamma":
            c = np.exp(0.5 * theta[..., sl["log_c2"].start])
        elif slab.kind == "fixed":
            c = np.full(batch, slab.c)
        else:
            c = None
        if c is None:
            lam_t = lam
        else:
            lam_t = lambda_tilde(lam, tau[..., None], c[..., None])
        z = theta[..., sl["z"]]
        out["beta"] = z * tau[..., None] * lam_t
        out["tau"] = tau
        out["lambda"] = np.array(lam)
        out["lambda_tilde"] = np.array(lam_t)
        if c is not None:
            out["c"] = c
        if sigma is not None:
            out["sigma"] = sigma
        if "beta0" in sl:
            out["beta0"] = theta[..., sl["beta0"].start]
        return out

    def initial_points(self, chains: int, seed: int) -> np.ndarray:
        """Uniform(-2, 2) starts; redrawn (same stream) until the target is finite."""
        from horseshoe.sampler.nuts import random_inits

        inits = random_inits(self.dim, chains, seed)
        for c in range(chains):
            rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, c, 2]))
            for _ in range(100):
                lp, g = self.logp_grad(inits[c])
                if np.isfinite(lp):
                    break
                inits[c] = rng.uniform(-2.0, 2.0, self.dim)
        return inits


def log_joint_and_grad(params: ModelParams, data: Dataset, prior: PriorSpec,
                       **clamps) -> tuple[float, np.ndarray]:
    """Unnormalized log posterior and its gradient on the unconstrained scale."""
    model = GlmModel(data, prior, **clamps)
    return model.logp_grad(model.pack(params))


def transform_to_constrained(params: ModelParams, prior: PriorSpec, data: Dataset,
                             **clamps) -> dict:
    model = GlmModel(data, prior, **clamps)
    return model.constrain(model.pack(params))


@dataclass
class FitResult:
    model: GlmModel
    draws: PosteriorDraws
    diagnostics: object
    config: SamplerConfig

    def posterior_mean(self, name: str) -> np.ndarray:
        return self.draws.flat(name).mean(axis=0)


def fit(data: Dataset, prior: PriorSpec, config: SamplerConfig | None = None,
        diagnose=None, **clamps) -> FitResult:
    """Sample the posterior; ``diagnose`` limits R-hat / ESS to some parameters."""
    config = config or SamplerConfig()
    model = GlmModel(data, prior, **clamps)
    inits = model.initial_points(config.chains, config.seed)
    draws, diag = run_chains(model.target, inits, config, transform=model.constrain,
                             diagnose=diagnose)
    return FitResult(model, draws, diag, config)


def plugin_sigma(data: Dataset) -> float:
    """Plug-in noise sd for non-Gaussian families: pseudo-sd at the sample mean."""
    if data.family.name == "gaussian":
        raise ValueError("gaussian models carry their own sigma")
    mu = float(np.clip(data.y.mean(), 1e-6, 1 - 1e-6))
    return math.sqrt(pseudo_variance(data.family, mu))


def posterior_meff(draws: PosteriorDraws, data: Dataset) -> MeffDraws:
    """Per-draw effective number of nonzeros.

    Uses each draw's tau, regularized local scales and sigma (the family
    pseudo-sd at the sample mean for non-Gaussian models).
    """
    tau = draws.flat("tau")
    if tau.size == 0:
        raise ValueError("no draws")
    lam = draws.flat("lambda_tilde")
    if "sigma" in draws.params:
        sigma = draws.flat("sigma")
    else:
        sigma = np.full(tau.shape, plugin_sigma(data))
    ctx = data.shrinkage_context()
    return MeffDraws(meff_given_scales(tau, lam, ctx, sigma), ctx, local_dof=float("nan"), tau=tau)


def _linear_predictor(draws: PosteriorDraws, data: Dataset) -> np.ndarray:
    beta = draws.flat("beta")
    f = beta if data.X is None else beta @ data.X.T
    if "beta0" in draws.params:
        f = f + draws.flat("beta0")[:, None]
    return f


def predictive_metrics(draws: PosteriorDraws, test: Dataset) -> dict:
    """MLPD on held-out data plus MSE (gaussian) or accuracy (binomial)."""
    if test.n == 0:
        raise ValueError("empty test set")
    f = _linear_predictor(draws, test)
    y = test.y
    S = f.shape[0]
    if test.family.name == "gaussian":
        sigma = draws.flat("sigma")[:, None]
        logp = -0.5 * np.log(2 * np.pi) - np.log(sigma) - 0.5 * ((y - f) / sigma) ** 2
        mlpd = float(np.mean(logsumexp(logp, axis=0) - np.log(S)))
        return {"mlpd": mlpd, "mse": float(np.mean((y - f.mean(axis=0)) ** 2))}
    # log sigmoid(+-f) computed stably
    logp = -np.logaddexp(0.0, np.where(y == 1, -f, f))
    mlpd = float(np.mean(logsumexp(logp, axis=0) - np.log(S)))
    prob = expit(f).mean(axis=0)
    return {"mlpd": mlpd, "accuracy": float(np.mean((prob > 0.5) == (y == 1)))}
