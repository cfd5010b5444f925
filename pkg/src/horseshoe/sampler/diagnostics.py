"""Convergence diagnostics: rank-normalized split R-hat and bulk ESS."""

import warnings

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata


def _as_chains(chains):
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected a (chains, draws) array")
    if x.shape[0] < 2:
        raise ValueError("at least 2 chains are required")
    if x.shape[1] < 4:
        raise ValueError("each chain needs at least 4 draws")
    if not np.all(np.isfinite(x)):
        raise ValueError("chains contain non-finite values")
    return x


def _split(x):
    half = x.shape[1] // 2
    return np.concatenate([x[:, :half], x[:, -half:]], axis=0)


def _rank_normalize(x):
    r = rankdata(x, method="average").reshape(x.shape)
    return ndtri((r - 0.375) / (x.size + 0.25))


def _degenerate(x):
    return np.ptp(x) == 0.0 or np.any(np.var(x, axis=1) == 0.0)


def _rhat_basic(x):
    n = x.shape[1]
    within = np.mean(np.var(x, axis=1, ddof=1))
    between = n * np.var(np.mean(x, axis=1), ddof=1)
    var_plus = (n - 1) / n * within + between / n
    return float(np.sqrt(var_plus / within))


def compute_rhat(chains, rank_normalize=True):
    """Split R-hat.

    Parameters
    ----------
    chains : array_like, shape (n_chains, n_draws)
    rank_normalize : bool
        If true (default), the maximum of the rank-normalized bulk and
        folded (tail) versions. Rank normalization makes the statistic
        robust to heavy tails but also bounds it for fully separated chains
        (about 1.83 for two chains); ``False`` gives the classic split R-hat
        on the raw values, which grows without bound with the separation.

    Returns
    -------
    float
        R-hat, or ``nan`` (with a ``RuntimeWarning``) for zero-variance input.
    """
    s = _split(_as_chains(chains))
    if _degenerate(s):
        warnings.warn("R-hat undefined for zero-variance chains", RuntimeWarning)
        return float("nan")
    if not rank_normalize:
        return _rhat_basic(s)
    bulk = _rhat_basic(_rank_normalize(s))
    folded = np.abs(s - np.median(s))
    # the two draws straddling an even-count median fold to a tie only up to
    # rounding; snap near-ties so the ranks do not depend on location or scale
    step = 1e-10 * folded.max()
    if step > 0:
        folded = np.round(folded / step)
    if _degenerate(folded):
        return bulk
    tail = _rhat_basic(_rank_normalize(folded))
    return max(bulk, tail)


def _autocovariance(x):
    """Biased autocovariance of each row via FFT."""
    n = x.shape[1]
    m = 1 << (2 * n - 1).bit_length()
    centered = x - x.mean(axis=1, keepdims=True)
    f = np.fft.rfft(centered, n=m, axis=1)
    acov = np.fft.irfft(f * np.conjugate(f), n=m, axis=1)[:, :n]
    return acov / n


def _ess_basic(x):
    m, n = x.shape
    acov = _autocovariance(x)
    chain_var = acov[:, 0] * n / (n - 1.0)
    within = chain_var.mean()
    var_plus = within * (n - 1.0) / n
    if m > 1:
        var_plus += np.var(x.mean(axis=1), ddof=1)
    rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    # Geyer's initial positive sequence on pair sums, made monotone
    pair_sums = []
    t = 0
    while t + 1 < n:
        p = rho[t] + rho[t + 1]
        if p < 0.0:
            break
        pair_sums.append(p)
        t += 2
    pair_sums = np.minimum.accumulate(np.asarray(pair_sums)) if pair_sums else np.array([1.0])
    tau = -1.0 + 2.0 * pair_sums.sum()
    tau = max(tau, 1.0 / np.log10(m * n))
    return float(m * n / tau)


def compute_ess(chains):
    """Bulk effective sample size of rank-normalized split chains.

    Returns ``nan`` (with a ``RuntimeWarning``) for zero-variance input.
    """
    s = _split(_as_chains(chains))
    if _degenerate(s):
        warnings.warn("ESS undefined for zero-variance chains", RuntimeWarning)
        return float("nan")
    return _ess_basic(_rank_normalize(s))
