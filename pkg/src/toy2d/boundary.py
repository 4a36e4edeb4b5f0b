"""True class boundaries on [−1, 1]² and their signed distance maps.

Grids are indexed [row, col] with row ↔ y and col ↔ x; pixel centres sit at
−1 + (i + ½)·pitch with pitch = 2 / resolution. The signed distance m(p) is
positive on class 1 and negative on class 0, in domain units. The boundary
runs between pixel centres, so the pixels touching it carry |m| = ½·pitch.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

from src.artifacts.netpbm import read_pgm, write_pgm
from src.errors import DataError

DEFAULT_RESOLUTION = 512


class BoundarySpec(BaseModel):
    """Procedural sine boundary y = amplitude·sin(frequency·π·x), or a binary raster image."""

    model_config = ConfigDict(extra="forbid")

    source: Literal["sine", "raster"] = "sine"
    amplitude: float = 0.3
    frequency: float = 2.2
    raster_path: str = ""
    resolution: int = Field(default=DEFAULT_RESOLUTION, ge=8)


def pixel_centres(resolution: int) -> np.ndarray:
    pitch = 2.0 / resolution
    return -1.0 + (np.arange(resolution) + 0.5) * pitch


def rasterize(spec: BoundarySpec) -> np.ndarray:
    """Boolean class-1 raster at spec.resolution (or the raster's own size)."""
    if spec.source == "raster":
        if not spec.raster_path:
            raise DataError("raster boundary needs raster_path")
        img = read_pgm(spec.raster_path)
        if img.shape[0] != img.shape[1]:
            raise DataError(f"boundary raster must be square, got {img.shape}")
        return img >= 128
    c = pixel_centres(spec.resolution)
    ys, xs = np.meshgrid(c, c, indexing="ij")
    return ys > spec.amplitude * np.sin(spec.frequency * np.pi * xs)


def signed_edt_pixels(mask: np.ndarray) -> np.ndarray:
    """Exact EDT in pixels to the nearest pixel of the other class; negative on class 0."""
    mask = np.asarray(mask, dtype=bool)
    if mask.all() or not mask.any():
        raise DataError("boundary raster holds a single class")
    inside = ndimage.distance_transform_edt(mask)
    outside = ndimage.distance_transform_edt(~mask)
    return np.where(mask, inside, -outside)


@dataclass(frozen=True)
class DistanceMap:
    grid: np.ndarray  # signed distance per pixel, domain units
    pitch: float

    @property
    def resolution(self) -> int:
        return self.grid.shape[0]

    def value_at(self, points: np.ndarray) -> np.ndarray:
        """Bilinear m(p) for N×2 points given as (x, y); clamps at the domain edge."""
        points = np.atleast_2d(points)
        col = (points[:, 0] + 1.0) / self.pitch - 0.5
        row = (points[:, 1] + 1.0) / self.pitch - 0.5
        return ndimage.map_coordinates(self.grid, np.stack([row, col]), order=1, mode="nearest")

    def labels_at(self, points: np.ndarray) -> np.ndarray:
        return (self.value_at(points) > 0).astype(np.int64)

    def band_fraction(self, half_width: float) -> float:
        """Fraction of the domain area with |m| < half_width."""
        return float((np.abs(self.grid) < half_width).mean())


def signed_distance_map(mask: np.ndarray) -> DistanceMap:
    """Signed distance map of a square class-1 raster covering [−1, 1]²."""
    if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
        raise DataError(f"boundary raster must be square, got {mask.shape}")
    pitch = 2.0 / mask.shape[0]
    d = signed_edt_pixels(mask)
    return DistanceMap(np.sign(d) * (np.abs(d) - 0.5) * pitch, pitch)


def load_boundary(spec: BoundarySpec | None = None) -> DistanceMap:
    return signed_distance_map(rasterize(spec or BoundarySpec()))


def write_boundary_raster(path: str | Path, mask: np.ndarray) -> None:
    """Save a class raster in the format rasterize() reads back."""
    write_pgm(path, np.where(mask, 255, 0).astype(np.uint8))
