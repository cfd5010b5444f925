import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from horseshoe.elicitation import (
    BracketError,
    MeffDraws,
    TauPrior,
    expected_meff,
    expected_shrinkage_complement,
    sample_half_t,
    sample_meff_prior,
    solve_tau_for_meff,
    summarize_meff,
)
from horseshoe.shrinkage import ShrinkageContext, meff_moments, tau_reference


class TestTauPrior:
    def test_validation(self):
        with pytest.raises(ValueError):
            TauPrior("lognormal", 1.0)
        with pytest.raises(ValueError):
            TauPrior.half_cauchy(0.0)
        with pytest.raises(ValueError):
            TauPrior("half_t", 1.0)

    def test_round_trip(self):
        tp = TauPrior.half_t(3, 0.02, relative_to_sigma=True)
        assert TauPrior.from_dict(tp.to_dict()) == tp

    def test_effective_dof(self):
        assert TauPrior.half_cauchy().effective_dof == 1.0
        assert math.isinf(TauPrior.half_normal(1.0).effective_dof)
        assert TauPrior.half_t(3, 1.0).effective_dof == 3.0

    def test_relative_scale(self):
        assert TauPrior.fixed(0.1, relative_to_sigma=True).scale_for(2.0) == 0.2
        assert TauPrior.fixed(0.1).scale_for(2.0) == 0.1


class TestHalfT:
    @pytest.mark.parametrize("dof", [1.0, 3.0, math.inf])
    def test_distribution(self, dof):
        rng = np.random.default_rng(2)
        x = sample_half_t(rng, dof, 20000)
        ref = stats.halfnorm() if math.isinf(dof) else stats.t(dof)
        cdf = (lambda v: ref.cdf(v)) if math.isinf(dof) else (lambda v: 2 * ref.cdf(v) - 1)
        assert stats.kstest(x, cdf).pvalue > 0.01

    def test_positive(self):
        assert np.all(sample_half_t(np.random.default_rng(0), 1.0, 1000) > 0)


class TestSampleMeffPrior:
    def test_fixed_tau0_centered_on_guess(self):
        ctx = ShrinkageContext(100, 10)
        tau0 = tau_reference(5, ctx)
        d = sample_meff_prior(TauPrior.fixed(tau0), 1.0, ctx, 10_000, seed=1)
        se = d.values.std(ddof=1) / math.sqrt(d.values.size)
        assert abs(d.values.mean() - 5.0) < 3 * se

    def test_half_cauchy_favors_dense(self):
        ctx = ShrinkageContext(100, 1000)
        d = sample_meff_prior(TauPrior.half_cauchy(1.0), 1.0, ctx, 4000, seed=2)
        assert np.mean(d.values > 500) > 0.5

    def test_bounds(self):
        ctx = ShrinkageContext(30, 25)
        d = sample_meff_prior(TauPrior.half_cauchy(0.3), 1.0, ctx, 3000, seed=3)
        assert np.all((d.values >= 0) & (d.values <= 25))

    def test_deterministic(self):
        ctx = ShrinkageContext(10, 5)
        a = sample_meff_prior(TauPrior.half_cauchy(), 1.0, ctx, 1, seed=9)
        b = sample_meff_prior(TauPrior.half_cauchy(), 1.0, ctx, 1, seed=9)
        np.testing.assert_array_equal(a.values, b.values)

    def test_workers_do_not_change_output(self):
        ctx = ShrinkageContext(10, 5)
        a = sample_meff_prior(TauPrior.half_t(3, 0.2), 3.0, ctx, 5000, seed=4)
        b = sample_meff_prior(TauPrior.half_t(3, 0.2), 3.0, ctx, 5000, seed=4, workers=3)
        np.testing.assert_array_equal(a.values, b.values)

    def test_validation(self):
        ctx = ShrinkageContext(10, 5)
        with pytest.raises(ValueError):
            sample_meff_prior(TauPrior.half_cauchy(), 1.0, ctx, 0)
        with pytest.raises(ValueError):
            sample_meff_prior(TauPrior.half_cauchy(), 0.0, ctx, 10)

    @pytest.mark.parametrize("tau", [0.01, 0.1, 1.0])
    def test_moments_match_closed_form(self, tau):
        ctx = ShrinkageContext(100, 10, 1.0, np.linspace(0.5, 2.0, 10))
        d = sample_meff_prior(TauPrior.fixed(tau), 1.0, ctx, 40_000, seed=5)
        mean, var = meff_moments(tau, ctx)
        v = d.values
        assert abs(v.mean() - mean) < 3 * v.std() / math.sqrt(v.size)
        sq = (v - v.mean()) ** 2
        assert abs(sq.mean() - var) < 3 * sq.std() / math.sqrt(v.size)

    @settings(max_examples=20, deadline=None)
    @given(factor=st.floats(0.01, 100.0), n2=st.integers(1, 1000))
    def test_invariant_under_matched_rescaling(self, factor, n2):
        base = ShrinkageContext(100, 8, 1.0)
        other = ShrinkageContext(n2, 8, factor)
        # keep tau sqrt(n) / sigma fixed
        tau_other = 0.05 * math.sqrt(100) / 1.0 * factor / math.sqrt(n2)
        a = sample_meff_prior(TauPrior.fixed(0.05), 1.0, base, 200, seed=6)
        b = sample_meff_prior(TauPrior.fixed(tau_other), 1.0, other, 200, seed=6)
        np.testing.assert_allclose(a.values, b.values, rtol=1e-12, atol=1e-12)

    def test_invariant_under_scale_permutation(self):
        s = np.linspace(0.5, 3.0, 6)
        perm = np.array([3, 0, 5, 1, 4, 2])
        ctx_a = ShrinkageContext(50, 6, 1.0, s)
        ctx_b = ShrinkageContext(50, 6, 1.0, s[perm])
        a = sample_meff_prior(TauPrior.half_cauchy(0.1), 1.0, ctx_a, 50_000, seed=7)
        b = sample_meff_prior(TauPrior.half_cauchy(0.1), 1.0, ctx_b, 50_000, seed=8)
        assert stats.ks_2samp(a.values, b.values).pvalue > 0.001


class TestSolveTau:
    def test_cauchy_closed_form(self):
        ctx = ShrinkageContext(100, 10)
        assert solve_tau_for_meff(5, 1.0, ctx) == pytest.approx(0.1, rel=1e-12)

    def test_cauchy_closed_form_agrees_with_reference(self):
        ctx = ShrinkageContext(200, 1000, 2.0)
        assert solve_tau_for_meff(5, 1.0, ctx) == pytest.approx(tau_reference(5, ctx), rel=1e-6)

    def test_cauchy_bisection_path(self):
        # unequal scales route through the bisection
        ctx = ShrinkageContext(100, 10, 1.0, np.full(10, 1.0 + 1e-15))
        assert solve_tau_for_meff(5, 1.0, ctx) == pytest.approx(0.1, rel=1e-6)

    def test_half_t_three(self):
        ctx = ShrinkageContext(30, 100, 2.0)
        tau = solve_tau_for_meff(2, 3.0, ctx)
        # independent check: quadrature over the half-t(3) density on a log grid
        a = tau * math.sqrt(30) / 2.0
        f = lambda u: (a * math.exp(u)) ** 2 / (1 + (a * math.exp(u)) ** 2) \
            * 2 * stats.t.pdf(math.exp(u), 3) * math.exp(u)
        e, _ = integrate.quad(f, -40, 40, limit=400, epsabs=1e-13)
        assert 100 * e == pytest.approx(2.0, rel=1e-3)
        # lighter local tails need a larger global scale for the same guess
        assert tau > tau_reference(2, ctx)

    def test_monte_carlo_agreement(self):
        ctx = ShrinkageContext(30, 100, 2.0)
        tau = solve_tau_for_meff(2, 3.0, ctx)
        d = sample_meff_prior(TauPrior.fixed(tau), 3.0, ctx, 20_000, seed=3)
        assert abs(d.values.mean() - 2.0) < 3 * d.values.std() / math.sqrt(20_000)

    def test_expected_complement_cauchy(self):
        assert expected_shrinkage_complement(1.0, 1.0) == 0.5
        assert expected_shrinkage_complement(2.0, 1.0 + 1e-12) == pytest.approx(2 / 3, rel=1e-6)

    def test_expected_meff_monotone(self):
        ctx = ShrinkageContext(30, 20)
        vals = [expected_meff(t, 3.0, ctx) for t in np.logspace(-4, 1, 12)]
        assert np.all(np.diff(vals) > 0)

    def test_rejects_large_guess(self):
        with pytest.raises(ValueError, match="prior guess must be below dimensionality"):
            solve_tau_for_meff(10, 3.0, ShrinkageContext(10, 10))

    def test_bracket_failure_near_dimension(self):
        with pytest.raises(BracketError):
            solve_tau_for_meff(10 - 1e-9, 3.0, ShrinkageContext(100, 10))


class TestSummary:
    def _draws(self, v, D=10):
        return MeffDraws(np.asarray(v, dtype=float), ShrinkageContext(1, D))

    def test_constant(self):
        s = summarize_meff(self._draws(np.full(100, 5.0)))
        assert s.mean == 5.0 and s.sd == 0.0

    def test_uniform(self):
        v = np.random.default_rng(0).uniform(0, 10, 10_000)
        s = summarize_meff(self._draws(v))
        assert abs(s.mean - 5.0) < 3 * v.std() / 100

    def test_quantiles_monotone(self):
        v = np.random.default_rng(1).uniform(0, 10, 1000)
        q = summarize_meff(self._draws(v), quantiles=(0.1, 0.5, 0.9)).quantiles
        assert q[0.1] <= q[0.5] <= q[0.9]

    def test_histogram(self):
        v = np.random.default_rng(1).uniform(0, 10, 1000)
        s = summarize_meff(self._draws(v))
        assert s.counts.size == 11 and s.counts.sum() == 1000
        assert s.bin_edges[0] == 0 and s.bin_edges[-1] == 10
        assert summarize_meff(self._draws(v, D=500)).counts.size == 50

    def test_errors(self):
        with pytest.raises(ValueError):
            summarize_meff(self._draws([]))
        with pytest.raises(ValueError):
            summarize_meff(self._draws([1.0]), quantiles=(1.5,))

    def test_to_dict(self):
        d = summarize_meff(self._draws([1.0, 2.0, 3.0])).to_dict()
        assert set(d) == {"mean", "sd", "quantiles", "histogram"}
