"""Virtual adversarial directions for dense prediction.

For each image x:

    r      ~ N(0, ξ/√dim(x) · I)
    g      = ∇_r d(f(x), f(x + r))
    r_adv  = ε · g / ‖g‖

d is the squared error summed over classes and averaged over pixels, with
f(x) held constant. ξ is relative to the image's own standard deviation and
ε is scaled per image by the magnitude of its spatial gradient.
"""

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.errors import ShapeError, ZeroGradientError
from src.logging.runlog import get_run_logger
from src.nn.network import Network, backward, forward

logger = get_run_logger("perturb.vat")

EpsMode = Literal["mean", "max", "norm"]


class VatConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    xi: float = Field(default=1e-3, gt=0)  # probe radius, × per-image std of x
    eps_scale: float = Field(default=1.0, ge=0)
    eps_mode: EpsMode = "mean"


def image_gradient_magnitude(x: np.ndarray, mode: EpsMode = "mean") -> np.ndarray:
    """Per-image magnitude of the forward-difference spatial gradient of a B×C×H×W batch.

    mean: mean over pixels of √(Δx² + Δy²), averaged over channels;
    max: the largest such per-pixel value; norm: root mean square over pixels.
    """
    if x.ndim != 4 or x.shape[2] < 2 or x.shape[3] < 2:
        raise ShapeError(f"image gradient needs a B×C×H×W batch with H, W ≥ 2, got {x.shape}")
    dx = x[:, :, :-1, 1:] - x[:, :, :-1, :-1]
    dy = x[:, :, 1:, :-1] - x[:, :, :-1, :-1]
    sq = dx * dx + dy * dy
    if mode == "mean":
        return np.sqrt(sq).mean(axis=(2, 3)).mean(axis=1)
    if mode == "max":
        return np.sqrt(sq).max(axis=(2, 3)).mean(axis=1)
    if mode == "norm":
        return np.sqrt(sq.mean(axis=(2, 3))).mean(axis=1)
    raise ShapeError(f"Unknown eps mode: {mode}")


def vat_directions(
    net: Network, x: np.ndarray, cfg: VatConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Adversarial perturbations for a batch, plus a per-image validity flag.

    Images whose gradient g vanishes get a zero perturbation and valid=False.
    """
    batch = x.shape[0]
    eps = cfg.eps_scale * image_gradient_magnitude(x, cfg.eps_mode)
    if not np.any(eps > 0):
        return np.zeros_like(x), np.ones(batch, dtype=bool)

    dim = int(np.prod(x.shape[1:]))
    std = x.reshape(batch, -1).std(axis=1)
    xi = cfg.xi * np.where(std > 0, std, 1.0)
    r = rng.standard_normal(x.shape) * (xi / np.sqrt(dim)).reshape(-1, 1, 1, 1)

    clean, _ = forward(net, x)
    probe, tape = forward(net, x + r.astype(x.dtype), cache=True)
    pixels = int(np.prod(probe.shape[2:]))
    _, g = backward(net, tape, 2.0 * (probe - clean) / pixels)

    g_norm = np.sqrt((g.reshape(batch, -1) ** 2).sum(axis=1))
    valid = np.isfinite(g_norm) & (g_norm > 0)
    scale = np.where(valid, eps / np.where(valid, g_norm, 1.0), 0.0)
    r_adv = g * scale.reshape(-1, 1, 1, 1)
    if not valid.all():
        logger.info("VAT gradient vanished", extra={"run_data": {"skipped": int((~valid).sum())}})
    return r_adv.astype(x.dtype, copy=False), valid


def vat_direction(net: Network, x: np.ndarray, cfg: VatConfig, rng: np.random.Generator) -> np.ndarray:
    """r_adv for every image of x; ‖r_adv‖₂ = ε per image."""
    r_adv, valid = vat_directions(net, x, cfg, rng)
    if not valid.all():
        raise ZeroGradientError(f"adversarial gradient is zero for {int((~valid).sum())} image(s)")
    return r_adv
