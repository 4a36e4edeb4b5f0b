"""PGM (P5) and PPM (P6) image files through Pillow."""

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from src.errors import DataError


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Float image in [0, 1] (values outside are clipped) to 8-bit."""
    if img.dtype == np.uint8:
        return img
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(path: str | Path, img: np.ndarray) -> None:
    """Write an H×W grey image (uint8, or float in [0, 1])."""
    if img.ndim != 2:
        raise DataError(f"PGM needs an H×W array, got {img.shape}")
    Image.fromarray(to_uint8(img)).save(path, format="PPM")


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    """Write an H×W×3 colour image (uint8, or float in [0, 1])."""
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DataError(f"PPM needs an H×W×3 array, got {rgb.shape}")
    Image.fromarray(to_uint8(rgb)).save(path, format="PPM")


def _open(path: str | Path, mode: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode != mode:
                raise DataError(f"{path}: expected image mode {mode}, found {im.mode}")
            return np.asarray(im, dtype=np.uint8).copy()
    except UnidentifiedImageError as e:
        raise DataError(f"{path}: not a readable image") from e


def read_pgm(path: str | Path) -> np.ndarray:
    """H×W uint8 array."""
    return _open(path, "L")


def read_ppm(path: str | Path) -> np.ndarray:
    """H×W×3 uint8 array."""
    return _open(path, "RGB")


def chw_to_rgb(img: np.ndarray) -> np.ndarray:
    """C×H×W float image (C = 1 or 3) to H×W×3 for write_ppm."""
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise DataError(f"expected a 1- or 3-channel C×H×W image, got {img.shape}")
    hwc = np.moveaxis(img, 0, -1)
    return np.repeat(hwc, 3, axis=2) if img.shape[0] == 1 else hwc
