"""Adaptive NUTS sampler with divergence and convergence diagnostics."""

from horseshoe.sampler.diagnostics import compute_ess, compute_rhat
from horseshoe.sampler.nuts import (
    CompiledTarget,
    Diagnostics,
    PosteriorDraws,
    SamplerConfig,
    run_chains,
    summarize_draws,
)

__all__ = [
    "CompiledTarget",
    "Diagnostics",
    "PosteriorDraws",
    "SamplerConfig",
    "compute_ess",
    "compute_rhat",
    "run_chains",
    "summarize_draws",
]
