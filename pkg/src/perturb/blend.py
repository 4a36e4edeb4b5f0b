"""MixUp-style blending of unsupervised inputs and teacher predictions (ICT)."""

from typing import Literal

import numpy as np

from src.errors import ConfigError, ShapeError

LambdaDist = Literal["uniform", "beta"]


def ict_blend(a: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    """λ·a + (1 − λ)·b."""
    if a.shape != b.shape:
        raise ShapeError(f"ict_blend operands differ: {a.shape} vs {b.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"blend factor must be in [0, 1], got {lam}", key="ict_lambda")
    return (lam * a + (1.0 - lam) * b).astype(a.dtype, copy=False)


def sample_lambda(rng: np.random.Generator, dist: LambdaDist = "uniform", beta_a: float = 1.0) -> float:
    """One blend factor per batch pair; beta(a, a) with a=1 is the uniform case."""
    if dist == "uniform":
        return float(rng.uniform(0.0, 1.0))
    if dist == "beta":
        if beta_a <= 0:
            raise ConfigError(f"beta parameter must be > 0, got {beta_a}", key="ict_beta")
        return float(rng.beta(beta_a, beta_a))
    raise ConfigError(f"Unknown lambda distribution: {dist}", key="ict_lambda_dist")
