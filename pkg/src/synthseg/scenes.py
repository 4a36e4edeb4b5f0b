"""Procedural segmentation scenes: textured shapes on a textured background.

Class 0 is background; classes 1..3 are circles, rectangles and triangles,
each with its own procedural texture. Shapes are rasterised with Pillow at
4× resolution; the image uses the per-pixel coverage (anti-aliasing) while
the label map takes the shape covering each pixel centre, later shapes
painting over earlier ones.
"""

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.ndimage import gaussian_filter

from src.density.corpus import LabeledImage, save_labeled_image
from src.rng import stream

SUPERSAMPLE = 4
SHAPE_KINDS = ("circle", "rectangle", "triangle")


class Texture(BaseModel):
    model_config = ConfigDict(extra="forbid")

    colour: tuple[float, float, float]
    amplitude: float = Field(default=0.2, ge=0)
    smoothing: float = Field(default=1.5, ge=0)  # gaussian sigma in pixels


def _default_textures() -> list[Texture]:
    return [
        Texture(colour=(0.45, 0.45, 0.42), amplitude=0.18, smoothing=4.0),
        Texture(colour=(0.80, 0.35, 0.30), amplitude=0.20, smoothing=1.0),
        Texture(colour=(0.35, 0.70, 0.35), amplitude=0.20, smoothing=2.5),
        Texture(colour=(0.30, 0.35, 0.80), amplitude=0.25, smoothing=0.7),
    ]


class SceneSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    size: int = Field(default=64, ge=16)
    n_classes: int = Field(default=4, ge=2, le=4)
    min_shapes: int = Field(default=1, ge=1)
    max_shapes: int = Field(default=4, ge=1)
    min_radius: float = Field(default=0.12, gt=0, le=0.5)  # of image size
    max_radius: float = Field(default=0.28, gt=0, le=0.5)
    textures: list[Texture] = Field(default_factory=_default_textures)

    @model_validator(mode="after")
    def _check(self) -> "SceneSpec":
        if self.max_shapes < self.min_shapes:
            raise ValueError("max_shapes must be >= min_shapes")
        if self.max_radius < self.min_radius:
            raise ValueError("max_radius must be >= min_radius")
        if len(self.textures) < self.n_classes:
            raise ValueError(f"need {self.n_classes} textures, got {len(self.textures)}")
        return self


def _texture(tex: Texture, size: int, rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal((3, size, size))
    if tex.smoothing > 0:
        noise = gaussian_filter(noise, sigma=(0, tex.smoothing, tex.smoothing))
    std = noise.std()
    if std > 0:
        noise = noise / std
    return np.asarray(tex.colour).reshape(3, 1, 1) + tex.amplitude * noise


def _draw_shape(draw: ImageDraw.ImageDraw, kind: str, cy: float, cx: float, r: float, angle: float) -> None:
    if kind == "circle":
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=255)
    elif kind == "rectangle":
        half_h = r * (0.6 + 0.4 * abs(np.cos(angle)))
        draw.rectangle([cx - r, cy - half_h, cx + r, cy + half_h], fill=255)
    else:
        pts = [(cx + r * np.cos(angle + k * 2 * np.pi / 3), cy + r * np.sin(angle + k * 2 * np.pi / 3)) for k in range(3)]
        draw.polygon(pts, fill=255)


def gen_scene(spec: SceneSpec, seed: int) -> LabeledImage:
    """Deterministic scene for (spec, seed)."""
    rng = stream(seed, "scene")
    size, hi = spec.size, spec.size * SUPERSAMPLE
    image = _texture(spec.textures[0], size, rng)
    labels = np.zeros((size, size), dtype=np.int64)
    centre = slice(SUPERSAMPLE // 2, None, SUPERSAMPLE)

    for _ in range(int(rng.integers(spec.min_shapes, spec.max_shapes + 1))):
        cls = int(rng.integers(1, spec.n_classes))
        kind = SHAPE_KINDS[(cls - 1) % len(SHAPE_KINDS)]
        r = rng.uniform(spec.min_radius, spec.max_radius) * hi
        cy, cx = rng.uniform(r * 0.5, hi - r * 0.5, size=2)
        angle = rng.uniform(0, 2 * np.pi)

        canvas = Image.new("L", (hi, hi), 0)
        _draw_shape(ImageDraw.Draw(canvas), kind, cy, cx, r, angle)
        mask_hi = np.asarray(canvas) > 0
        coverage = mask_hi.reshape(size, SUPERSAMPLE, size, SUPERSAMPLE).mean(axis=(1, 3))
        image = (1.0 - coverage) * image + coverage * _texture(spec.textures[cls], size, rng)
        labels[mask_hi[centre, centre]] = cls

    if not np.any(labels > 0):
        # shape too thin to cover any pixel centre: label its densest pixel
        labels.flat[int(np.argmax(coverage))] = cls
    return LabeledImage(np.clip(image, 0.0, 1.0), labels)


def dump_scenes(spec: SceneSpec, seeds: list[int], directory: str | Path) -> None:
    """Write scenes as <seed>.ppm / <seed>.pgm pairs for the density tools."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for seed in seeds:
        save_labeled_image(directory, f"scene_{seed:06d}", gen_scene(spec, seed))
