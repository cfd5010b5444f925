"""Multi-chain adaptive NUTS driver.

Chains are independent: each owns an RNG stream derived from
``(seed, chain_index)``, so per-chain draws do not depend on how many chains
run or whether they run concurrently.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba.core.registry import CPUDispatcher

from horseshoe.sampler import _kernel
from horseshoe.sampler.diagnostics import compute_ess, compute_rhat

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    warmup: int = 1000
    samples: int = 1000
    target_accept: float = 0.8
    max_depth: int = 10
    divergence_energy_threshold: float = 1000.0
    seed: int = 0
    parallel: bool = False

    def __post_init__(self):
        for name in ("chains", "warmup", "samples", "max_depth"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if not self.divergence_energy_threshold > 0:
            raise ValueError("divergence_energy_threshold must be positive")


@dataclass(frozen=True)
class CompiledTarget:
    """A numba-jitted ``fn(theta, args) -> (logp, grad)`` plus its arguments."""

    fn: CPUDispatcher
    args: tuple
    dim: int


@dataclass
class PosteriorDraws:
    """Post-warmup draws organized by chain.

    ``params`` maps a name to an array of shape ``(chains, draws, ...)``;
    ``unconstrained`` holds the raw sampler state.
    """

    params: dict[str, np.ndarray]
    unconstrained: np.ndarray
    divergent: np.ndarray
    tree_depth: np.ndarray
    accept_stat: np.ndarray
    n_leapfrog: np.ndarray
    log_density: np.ndarray
    step_size: np.ndarray
    inv_mass: np.ndarray
    warmup_divergent: np.ndarray

    @property
    def n_chains(self) -> int:
        return self.unconstrained.shape[0]

    @property
    def n_draws(self) -> int:
        return self.unconstrained.shape[1]

    def flat(self, name: str) -> np.ndarray:
        """Draws of ``name`` with chains concatenated."""
        a = self.params[name]
        return a.reshape((-1,) + a.shape[2:])


@dataclass
class Diagnostics:
    rhat: dict[str, np.ndarray]
    ess_bulk: dict[str, np.ndarray]
    divergence_fraction: float
    n_divergent: int
    extra: dict = field(default_factory=dict)

    def max_rhat(self) -> float:
        vals = [np.nanmax(v) for v in self.rhat.values() if np.size(v) and not np.all(np.isnan(v))]
        return float(max(vals)) if vals else float("nan")

    def min_ess(self) -> float:
        vals = [np.nanmin(v) for v in self.ess_bulk.values() if np.size(v) and not np.all(np.isnan(v))]
        return float(min(vals)) if vals else float("nan")


def chain_seed(seed: int, chain: int) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, chain]).generate_state(1)[0])


def random_inits(dim: int, chains: int, seed: int) -> np.ndarray:
    """Uniform(-2, 2) starting points, one stream per chain."""
    out = np.empty((chains, dim))
    for c in range(chains):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, c, 1]))
        out[c] = rng.uniform(-2.0, 2.0, dim)
    return out


def warmup_buffers(n_warmup: int) -> tuple[int, int, int, bool]:
    """(init_buffer, term_buffer, base_window, adapt_metric) for a warmup length."""
    init, term, base = 75, 50, 25
    if n_warmup < 20:
        return 0, 0, 0, False
    if init + term + base > n_warmup:
        init = int(0.15 * n_warmup)
        term = int(0.1 * n_warmup)
        base = n_warmup - (init + term)
    return init, term, base, True


def _wrap_python(fn):
    def target(theta, args):
        lp, grad = fn(theta)
        return float(lp), np.asarray(grad, dtype=float)
    return target


def run_chains(
    target: CompiledTarget | Callable,
    init: np.ndarray | int,
    config: SamplerConfig,
    transform: Callable[[np.ndarray], dict] | None = None,
    diagnose=None,
) -> tuple[PosteriorDraws, Diagnostics]:
    """Run ``config.chains`` NUTS chains and compute diagnostics.

    Parameters
    ----------
    target
        Either a :class:`CompiledTarget` (fast path) or a plain Python callable
        ``f(theta) -> (logp, grad)``.
    init
        Array of shape ``(chains, dim)`` with starting points, or an integer
        dimension to draw Uniform(-2, 2) starting points.
    transform
        Maps an ``(..., dim)`` array of unconstrained draws to named
        constrained arrays. Defaults to ``{"theta": draws}``.
    diagnose
        Names of the parameters that get R-hat / ESS; all when ``None``.
    """
    if isinstance(target, CompiledTarget):
        run = _kernel.JIT_RUN_CHAIN
        fn, args = target.fn, target.args
    else:
        run = _kernel.PY_RUN_CHAIN
        fn, args = _wrap_python(target), ()

    if np.ndim(init) == 0:
        inits = random_inits(int(init), config.chains, config.seed)
    else:
        inits = np.array(init, dtype=float, ndmin=2)
        if inits.shape[0] != config.chains:
            raise ValueError(f"expected {config.chains} initial points, got {inits.shape[0]}")
    dim = inits.shape[1]

    for c in range(config.chains):
        lp, grad = fn(inits[c].copy(), args)
        if not (np.isfinite(lp) and np.all(np.isfinite(grad))):
            raise ValueError(f"chain {c}: target is not finite at the initial point")

    init_buf, term_buf, base_win, adapt = warmup_buffers(config.warmup)

    def one_chain(c):
        return run(fn, args, inits[c].copy(), chain_seed(config.seed, c),
                   config.warmup, config.samples, float(config.target_accept),
                   config.max_depth, float(config.divergence_energy_threshold),
                   init_buf, term_buf, base_win, adapt, np.ones(dim), 1.0)

    if config.parallel and run is _kernel.JIT_RUN_CHAIN and config.chains > 1:
        with ThreadPoolExecutor(max_workers=config.chains) as pool:
            results = list(pool.map(one_chain, range(config.chains)))
    else:
        results = [one_chain(c) for c in range(config.chains)]

    theta = np.stack([r[0] for r in results])
    params = transform(theta) if transform is not None else {"theta": theta}
    draws = PosteriorDraws(
        params=params,
        unconstrained=theta,
        log_density=np.stack([r[1] for r in results]),
        tree_depth=np.stack([r[2] for r in results]),
        n_leapfrog=np.stack([r[3] for r in results]),
        accept_stat=np.stack([r[4] for r in results]),
        divergent=np.stack([r[5] for r in results]),
        step_size=np.array([r[6] for r in results]),
        inv_mass=np.stack([r[7] for r in results]),
        warmup_divergent=np.array([r[8] for r in results]),
    )
    diag = summarize_draws(draws, diagnose)
    logger.debug("sampling done: %d divergent, max rhat %.3f",
                 diag.n_divergent, diag.max_rhat())
    return draws, diag


def summarize_draws(draws: PosteriorDraws, names=None) -> Diagnostics:
    """Per-parameter R-hat / bulk ESS and the post-warmup divergence fraction."""
    rhat, ess = {}, {}
    multi = draws.n_chains >= 2 and draws.n_draws >= 4
    for name, arr in draws.params.items():
        if names is not None and name not in names:
            continue
        shape = arr.shape[2:]
        flat = arr.reshape(arr.shape[0], arr.shape[1], -1)
        r = np.full(flat.shape[2], np.nan)
        e = np.full(flat.shape[2], np.nan)
        if multi:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                for k in range(flat.shape[2]):
                    r[k] = compute_rhat(flat[:, :, k])
                    e[k] = compute_ess(flat[:, :, k])
        rhat[name] = r.reshape(shape)
        ess[name] = e.reshape(shape)
    n_div = int(draws.divergent.sum())
    return Diagnostics(rhat=rhat, ess_bulk=ess,
                       divergence_fraction=n_div / draws.divergent.size,
                       n_divergent=n_div)
