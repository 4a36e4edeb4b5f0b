"""Affine augmentation with prediction alignment.

The transform acts about the image centre c in (y, x) pixel coordinates:

    a(p) = A·(p − c) + c + t,    A = R(rotation) · scale · F

where F mirrors x when flip_h is set. warp() resamples a tensor so that
output pixel o takes the bilinear value at source position a⁻¹(o). The same
parameters are applied to images (student input) and to teacher probability
maps, so the two predictions stay pixel-aligned.
"""

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.ndimage import map_coordinates

from src.errors import ShapeError

WarpKind = Literal["image", "probmap"]

_EDGE_TOL = 1e-9


class AffineRanges(BaseModel):
    """Sampling ranges for standard augmentation (uniform scaling 0.9–1.1, rotations, flips)."""

    model_config = ConfigDict(extra="forbid")

    scale_min: float = Field(default=0.9, gt=0)
    scale_max: float = Field(default=1.1, gt=0)
    rotation_deg: float = Field(default=15.0, ge=0)  # symmetric range ±rotation_deg
    translate_frac: float = Field(default=0.05, ge=0, le=1)  # of each image extent
    flip_prob: float = Field(default=0.5, ge=0, le=1)


@dataclass(frozen=True)
class AffineParams:
    scale: float = 1.0
    rotation: float = 0.0  # radians
    flip_h: bool = False
    translate_y: float = 0.0
    translate_x: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ShapeError(f"degenerate affine transform: scale {self.scale}")

    @property
    def is_identity(self) -> bool:
        return (self.scale == 1.0 and self.rotation == 0.0 and not self.flip_h
                and self.translate_y == 0.0 and self.translate_x == 0.0)

    def matrix(self) -> np.ndarray:
        """2×2 linear part A acting on (y, x) column vectors."""
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        rot = np.array([[c, -s], [s, c]])
        flip = np.diag([1.0, -1.0 if self.flip_h else 1.0])
        return self.scale * rot @ flip

    def inverse(self) -> "AffineParams":
        # A⁻¹ = F·R(−θ)/s = R(θ)·F/s when flipped, R(−θ)/s otherwise
        rotation = self.rotation if self.flip_h else -self.rotation
        t = -np.linalg.solve(self.matrix(), np.array([self.translate_y, self.translate_x]))
        return AffineParams(1.0 / self.scale, rotation, self.flip_h, float(t[0]), float(t[1]))


def sample_affine(ranges: AffineRanges, rng: np.random.Generator, size: tuple[int, int] = (64, 64)) -> AffineParams:
    """Draw one transform; translations are in pixels of an image of the given size."""
    h, w = size
    max_rot = math.radians(ranges.rotation_deg)
    return AffineParams(
        scale=float(rng.uniform(ranges.scale_min, ranges.scale_max)),
        rotation=float(rng.uniform(-max_rot, max_rot)),
        flip_h=bool(rng.random() < ranges.flip_prob),
        translate_y=float(rng.uniform(-1, 1) * ranges.translate_frac * h),
        translate_x=float(rng.uniform(-1, 1) * ranges.translate_frac * w),
    )


def _source_coords(p: AffineParams, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    oy, ox = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    inv = np.linalg.inv(p.matrix())
    dy = oy - cy - p.translate_y
    dx = ox - cx - p.translate_x
    sy = inv[0, 0] * dy + inv[0, 1] * dx + cy
    sx = inv[1, 0] * dy + inv[1, 1] * dx + cx
    return sy, sx


def warp(t: np.ndarray, p: AffineParams, kind: WarpKind = "image") -> tuple[np.ndarray, np.ndarray]:
    """Resample t (C×H×W or B×C×H×W) through p.

    Returns the warped tensor and an H×W valid mask that is 0 where the
    source position falls outside the image. Probability maps (class axis
    is the channel axis) are clamped at 0 and renormalised on valid pixels;
    invalid pixels are zero in both kinds.
    """
    if t.ndim not in (3, 4):
        raise ShapeError(f"warp expects C×H×W or B×C×H×W, got {t.shape}")
    h, w = t.shape[-2:]
    if p.is_identity:
        return t.copy(), np.ones((h, w), dtype=t.dtype)

    sy, sx = _source_coords(p, h, w)
    valid = ((sy >= -_EDGE_TOL) & (sy <= h - 1 + _EDGE_TOL) & (sx >= -_EDGE_TOL) & (sx <= w - 1 + _EDGE_TOL))
    coords = np.stack([np.clip(sy, 0, h - 1), np.clip(sx, 0, w - 1)])

    planes = t.reshape(-1, h, w)
    out = np.stack([map_coordinates(plane, coords, order=1, mode="nearest") for plane in planes])
    out = out.reshape(t.shape) * valid

    if kind == "probmap":
        out = np.maximum(out, 0.0)
        class_axis = t.ndim - 3
        total = out.sum(axis=class_axis, keepdims=True)
        out = np.where(valid & (total > 0), out / np.where(total > 0, total, 1.0), 0.0)
    return out.astype(t.dtype, copy=False), valid.astype(t.dtype)
