"""Perturbation generators for consistency regularization."""
