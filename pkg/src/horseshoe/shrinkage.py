"""Closed-form shrinkage quantities for global-local scale-mixture priors.

Everything here is a pure function of its inputs. Notation: ``a_j =
tau * sqrt(n) * s_j / sigma`` is the dimensionless prior scale of coefficient
``j``; the shrinkage factor is ``kappa_j = 1 / (1 + a_j**2 * lambda_j**2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


@dataclass(frozen=True)
class ShrinkageContext:
    """Observation count, dimension, noise sd and predictor scales."""

    n: float
    D: int
    sigma: float = 1.0
    scales: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if not self.n >= 1:
            raise ValueError("n must be >= 1")
        if int(self.D) != self.D or self.D < 1:
            raise ValueError("D must be a positive integer")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        s = np.ones(int(self.D)) if self.scales is None else np.asarray(self.scales, dtype=float)
        if s.shape != (int(self.D),):
            raise ValueError(f"scales must have length D={self.D}")
        if not np.all(s > 0):
            raise ValueError("all scales must be positive")
        object.__setattr__(self, "scales", s)

    def a(self, tau) -> np.ndarray:
        """Per-predictor ``a_j = tau * sqrt(n) * s_j / sigma``."""
        return tau * math.sqrt(self.n) * self.scales / self.sigma

    def with_sigma(self, sigma: float) -> "ShrinkageContext":
        return ShrinkageContext(self.n, self.D, sigma, self.scales)


@dataclass(frozen=True)
class SlabSpec:
    """Slab for the regularized horseshoe.

    ``kind`` is ``"infinite"`` (plain horseshoe), ``"fixed"`` (slab scale
    ``c``) or ``"inverse_gamma"`` (``c**2 ~ InvGamma(alpha, beta)``).
    """

    kind: str = "infinite"
    c: float | None = None
    alpha: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.kind == "infinite":
            return
        if self.kind == "fixed":
            if self.c is None or not self.c > 0:
                raise ValueError("fixed slab needs c > 0")
        elif self.kind == "inverse_gamma":
            if self.alpha is None or self.beta is None or not (self.alpha > 0 and self.beta > 0):
                raise ValueError("inverse-gamma slab needs alpha > 0 and beta > 0")
        else:
            raise ValueError(f"unknown slab kind {self.kind!r}")

    @classmethod
    def infinite(cls) -> "SlabSpec":
        return cls("infinite")

    @classmethod
    def fixed(cls, c: float) -> "SlabSpec":
        return cls("fixed", c=float(c))

    @classmethod
    def inverse_gamma(cls, alpha: float, beta: float) -> "SlabSpec":
        return cls("inverse_gamma", alpha=float(alpha), beta=float(beta))

    @classmethod
    def student_t(cls, df: float, scale: float) -> "SlabSpec":
        """The inverse-gamma slab that yields a Student-t(df, 0, scale^2) tail."""
        return cls.inverse_gamma(df / 2.0, df * scale**2 / 2.0)


@dataclass(frozen=True)
class GlmFamily:
    """Observation family; ``shape`` is the Gamma alpha or inverse-Gaussian lambda."""

    name: str
    shape: float | None = None

    KNOWN = ("gaussian", "binomial", "poisson", "gamma", "inverse_gaussian")

    def __post_init__(self):
        if self.name not in self.KNOWN:
            raise ValueError(f"unknown family {self.name!r}")
        if self.name in ("gamma", "inverse_gaussian"):
            if self.shape is None or not self.shape > 0:
                raise ValueError(f"{self.name} family needs a positive shape parameter")


GAUSSIAN = GlmFamily("gaussian")
BINOMIAL = GlmFamily("binomial")
POISSON = GlmFamily("poisson")


def _positive(name, value):
    if not np.all(np.asarray(value) > 0):
        raise ValueError(f"{name} must be positive")


def shrinkage_factor(tau, lam, ctx: ShrinkageContext, j: int):
    """``1 / (1 + n sigma^-2 tau^2 s_j^2 lambda^2)``."""
    _positive("tau", tau)
    _positive("lambda", lam)
    if not 0 <= j < ctx.D:
        raise IndexError(f"predictor index {j} out of range for D={ctx.D}")
    return 1.0 / (1.0 + ctx.n * tau**2 * ctx.scales[j] ** 2 * lam**2 / ctx.sigma**2)


def kappa_prior_density(kappa, a):
    """Density of the shrinkage factor under a half-Cauchy local scale."""
    kappa = np.asarray(kappa, dtype=float)
    _positive("a", a)
    if np.any((kappa <= 0) | (kappa >= 1)):
        raise ValueError("kappa must lie in the open interval (0, 1)")
    out = a / ((a * a - 1.0) * kappa + 1.0) / (np.sqrt(kappa) * np.sqrt(1.0 - kappa)) / np.pi
    return out if out.ndim else float(out)


def kappa_moments(a) -> tuple[float, float]:
    """Prior mean and variance of the shrinkage factor for a given ``a``."""
    if not a > 0:
        raise ValueError("a must be positive")
    return 1.0 / (1.0 + a), a / (2.0 * (1.0 + a) ** 2)


def meff_moments(tau: float, ctx: ShrinkageContext) -> tuple[float, float]:
    """Prior mean and variance of the effective number of nonzeros given tau."""
    _positive("tau", tau)
    a = ctx.a(tau)
    return float(np.sum(a / (1.0 + a))), float(np.sum(a / (2.0 * (1.0 + a) ** 2)))


def meff_from_kappas(kappas) -> float:
    k = np.asarray(kappas, dtype=float)
    if np.any((k < 0) | (k > 1)) or not np.all(np.isfinite(k)):
        raise ValueError("shrinkage factors must lie in [0, 1]")
    return float(np.sum(1.0 - k))


def _check_p0(p0, D):
    if not p0 > 0:
        raise ValueError("prior guess p0 must be positive")
    if p0 >= D:
        raise ValueError("prior guess must be below dimensionality")


def tau_reference(p0: float, ctx: ShrinkageContext) -> float:
    """Global scale at which the prior mean of m_eff equals ``p0``."""
    _check_p0(p0, ctx.D)
    return p0 / (ctx.D - p0) * ctx.sigma / math.sqrt(ctx.n)


def tau_reference_identity(p0: float, D: int, sigma: float = 1.0) -> float:
    """Reference global scale for the identity design (one observation per coefficient)."""
    _check_p0(p0, D)
    _positive("sigma", sigma)
    return p0 / (D - p0) * sigma


def lambda_tilde(lam, tau, c):
    """Regularized local scale ``sqrt(c^2 lambda^2 / (c^2 + tau^2 lambda^2))``."""
    _positive("lambda", lam)
    _positive("tau", tau)
    _positive("c", c)
    # written so that c = inf (also inside an array) gives lambda back
    r = np.multiply(tau, lam) / c
    return lam / np.sqrt(1.0 + r * r)


def lambda_tilde_exact(lam, tau, c, ctx: ShrinkageContext, j: int):
    """Local scale that shifts the horseshoe shrinkage profile exactly onto (b_j, 1)."""
    _positive("lambda", lam)
    _positive("tau", tau)
    _positive("c", c)
    extra = ctx.sigma**2 / (ctx.n * ctx.scales[j] ** 2)
    return np.sqrt(c**2 * lam**2 / (extra + c**2 + tau**2 * lam**2))


def slab_shift(ctx: ShrinkageContext, c: float, j: int) -> float:
    """Lower end ``b_j`` of the shrinkage-factor support under a slab of width c."""
    _positive("c", c)
    return 1.0 / (1.0 + ctx.n * ctx.scales[j] ** 2 * c**2 / ctx.sigma**2)


def meff_regularized(meff: float, b: float) -> float:
    if not 0 <= b < 1:
        raise ValueError("b must lie in [0, 1)")
    if meff < 0:
        raise ValueError("meff must be nonnegative")
    return (1.0 - b) * meff


def pseudo_variance(family: GlmFamily, mu: float = None, dispersion: float = None) -> float:
    """Gaussian-approximation variance of one observation at mean ``mu``.

    For the Gaussian family ``dispersion`` is the noise variance. For Gamma
    and inverse-Gaussian, the shape parameter defaults to ``family.shape``.
    """
    name = family.name
    if name == "gaussian":
        if dispersion is None or not dispersion > 0:
            raise ValueError("gaussian pseudo-variance needs a positive noise variance")
        return float(dispersion)
    if mu is None:
        raise ValueError(f"{name} pseudo-variance needs mu")
    if name == "binomial":
        if not 0 < mu < 1:
            raise ValueError("binomial mean must lie in (0, 1)")
        return 1.0 / (mu * (1.0 - mu))
    if not mu > 0:
        raise ValueError(f"{name} mean must be positive")
    if name == "poisson":
        return 1.0 / mu
    shape = family.shape if dispersion is None else dispersion
    if not shape > 0:
        raise ValueError("shape parameter must be positive")
    if name == "gamma":
        return 1.0 / (mu**2 * shape)
    return 4.0 / (mu**3 * shape)


@dataclass(frozen=True)
class ShrinkageAtoms:
    kappas: tuple[float, float]
    weights: tuple[float, float]


def spike_slab_profile(c: float, pi: float, ctx: ShrinkageContext, j: int) -> ShrinkageAtoms:
    """Point masses of the shrinkage factor under a spike-and-slab prior."""
    _positive("c", c)
    if not 0 <= pi <= 1:
        raise ValueError("inclusion probability must lie in [0, 1]")
    slab_kappa = 0.0 if np.isinf(c) else slab_shift(ctx, c, j)
    return ShrinkageAtoms((slab_kappa, 1.0), (pi, 1.0 - pi))


class SingularSystemError(np.linalg.LinAlgError):
    pass


def conditional_posterior_beta(X, y, lambdas, tau, sigma):
    """Gaussian conditional posterior of the coefficients given all scales.

    Covariance ``(tau^-2 Lambda^-1 + sigma^-2 X^T X)^-1`` and mean
    ``Sigma sigma^-2 X^T y``; the precision form stays defined when D > n.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    _positive("lambdas", lambdas)
    _positive("tau", tau)
    _positive("sigma", sigma)
    precision = X.T @ X / sigma**2 + np.diag(1.0 / (tau**2 * lambdas**2))
    # condition number after Jacobi scaling, so tiny prior scales do not trip it
    d = 1.0 / np.sqrt(np.diag(precision))
    cond = np.linalg.cond(precision * np.outer(d, d))
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularSystemError(f"posterior precision is singular (condition number {cond:.3g})")
    try:
        chol = scipy.linalg.cho_factor(precision)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"posterior precision is not positive definite "
                                  f"(condition number {cond:.3g})") from exc
    cov = scipy.linalg.cho_solve(chol, np.eye(len(lambdas)))
    mean = scipy.linalg.cho_solve(chol, X.T @ y / sigma**2)
    return mean, cov
