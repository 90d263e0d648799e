"""Bayesian monitoring of recoverable regimes and drifting parameters."""
