"""Labelled image corpora on disk: <stem>.ppm image + <stem>.pgm label map."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.artifacts.netpbm import chw_to_rgb, read_pgm, read_ppm, write_pgm, write_ppm
from src.errors import DataError


@dataclass(frozen=True)
class LabeledImage:
    image: np.ndarray  # C×H×W reals in [0, 1]
    labels: np.ndarray  # H×W integer classes

    def __post_init__(self):
        if self.image.ndim != 3 or self.labels.ndim != 2 or self.image.shape[1:] != self.labels.shape:
            raise DataError(f"image {self.image.shape} and labels {self.labels.shape} disagree")
        if np.any(self.labels < 0):
            raise DataError("negative class label")

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1


def save_labeled_image(directory: str | Path, stem: str, item: LabeledImage) -> None:
    directory = Path(directory)
    write_ppm(directory / f"{stem}.ppm", chw_to_rgb(item.image))
    if item.labels.max() > 255:
        raise DataError("label maps are stored as 8-bit PGM")
    write_pgm(directory / f"{stem}.pgm", item.labels.astype(np.uint8))


def load_corpus(directory: str | Path) -> list[LabeledImage]:
    """All image/label pairs in a directory, in stem order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"corpus directory {directory} does not exist")
    items = []
    for image_path in sorted(directory.glob("*.ppm")):
        label_path = image_path.with_suffix(".pgm")
        if not label_path.exists():
            raise DataError(f"{image_path.name} has no matching label map {label_path.name}")
        rgb = read_ppm(image_path).astype(np.float64) / 255.0
        items.append(LabeledImage(np.moveaxis(rgb, -1, 0), read_pgm(label_path).astype(np.int64)))
    if not items:
        raise DataError(f"no .ppm/.pgm pairs in {directory}")
    return items
