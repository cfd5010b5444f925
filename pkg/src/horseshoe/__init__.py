"""Sparse Bayesian GLMs with horseshoe and regularized horseshoe priors."""
