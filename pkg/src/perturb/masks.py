"""CutOut / CutMix rectangle masks and the mix function.

A mask M holds one value per pixel. CutOut masks are 1 everywhere except a
rectangle of zeros; CutMix masks are 0 everywhere except a rectangle of
ones. mix(a, b, M) = (1 − M)·a + M·b selects each output pixel from a or b.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from src.artifacts.netpbm import write_pgm
from src.errors import SamplingError, ShapeError

Polarity = Literal["zero-inside", "one-inside"]

MIN_EXTENT = 4

# CutOut size and aspect distributions
CUTOUT_AREA_RANGE = (0.05, 0.4)
CUTOUT_ASPECT_RANGE = (1.0 / 3.0, 3.0)
# Widest log-symmetric range for which a half-area rectangle fits a square image
CUTMIX_ASPECT_RANGE = (0.5, 2.0)


@dataclass(frozen=True)
class RectMask:
    h: int
    w: int
    y0: int
    x0: int
    rh: int
    rw: int
    polarity: Polarity

    def __post_init__(self):
        if not (0 <= self.y0 and self.y0 + self.rh <= self.h and 0 <= self.x0 and self.x0 + self.rw <= self.w):
            raise ShapeError(f"rectangle {self.rh}×{self.rw} at ({self.y0}, {self.x0}) leaves the {self.h}×{self.w} image")

    @property
    def area(self) -> int:
        return self.rh * self.rw

    def materialize(self, dtype: np.dtype = np.float64) -> np.ndarray:
        """H×W array of exact 0/1 values."""
        inside, outside = (0.0, 1.0) if self.polarity == "zero-inside" else (1.0, 0.0)
        m = np.full((self.h, self.w), outside, dtype=dtype)
        m[self.y0:self.y0 + self.rh, self.x0:self.x0 + self.rw] = inside
        return m

    def to_pgm(self, path: str | Path) -> None:
        write_pgm(path, self.materialize())


def _check_extent(h: int, w: int) -> None:
    if h < MIN_EXTENT or w < MIN_EXTENT:
        raise SamplingError(f"image {h}×{w} too small for a mask rectangle (minimum {MIN_EXTENT}×{MIN_EXTENT})")


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def _place(h: int, w: int, rh: int, rw: int, rng: np.random.Generator) -> tuple[int, int]:
    return int(rng.integers(0, h - rh + 1)), int(rng.integers(0, w - rw + 1))


def gen_cutout_mask(h: int, w: int, rng: np.random.Generator) -> RectMask:
    """Zero-inside rectangle of random area fraction and aspect ratio."""
    _check_extent(h, w)
    area = rng.uniform(*CUTOUT_AREA_RANGE) * h * w
    aspect = _log_uniform(rng, *CUTOUT_ASPECT_RANGE)  # rh / rw
    rh = min(h, max(1, round(math.sqrt(area * aspect))))
    rw = min(w, max(1, round(math.sqrt(area / aspect))))
    y0, x0 = _place(h, w, rh, rw, rng)
    return RectMask(h, w, y0, x0, rh, rw, "zero-inside")


def gen_cutmix_mask(h: int, w: int, rng: np.random.Generator) -> RectMask:
    """One-inside rectangle covering half the image, random aspect and position."""
    _check_extent(h, w)
    area = h * w / 2.0
    aspect = _log_uniform(rng, *CUTMIX_ASPECT_RANGE)
    rh = round(math.sqrt(area * aspect))
    rw = round(math.sqrt(area / aspect))
    # Non-square images: clip the long side and keep the area
    if rh > h:
        rh, rw = h, round(area / h)
    if rw > w:
        rw, rh = w, round(area / w)
    rh, rw = max(1, min(rh, h)), max(1, min(rw, w))
    y0, x0 = _place(h, w, rh, rw, rng)
    return RectMask(h, w, y0, x0, rh, rw, "one-inside")


def mix(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """(1 − M)·a + M·b; M is H×W, B×H×W or B×1×H×W and broadcasts over channels."""
    if a.shape != b.shape:
        raise ShapeError(f"mix operands differ: {a.shape} vs {b.shape}")
    m = mask
    if a.ndim == 4 and m.ndim == 3:
        m = m[:, None]
    elif a.ndim >= 3 and m.ndim == 2:
        m = m.reshape((1,) * (a.ndim - 2) + m.shape)
    try:
        np.broadcast_shapes(m.shape, a.shape)
    except ValueError as e:
        raise ShapeError(f"mask {mask.shape} does not broadcast over {a.shape}") from e
    return ((1.0 - m) * a + m * b).astype(a.dtype, copy=False)


def batch_masks(kind: Literal["cutout", "cutmix"], batch: int, h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """B×1×H×W stack of independently drawn masks."""
    gen = gen_cutout_mask if kind == "cutout" else gen_cutmix_mask
    return np.stack([gen(h, w, rng).materialize() for _ in range(batch)])[:, None]
