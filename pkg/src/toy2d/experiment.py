"""2D toy runs: supervised vs isotropic vs distance-constrained consistency.

A 2→512→512→512→2 MLP is trained on a handful of labelled points. The
semi-supervised variants add a mean-teacher consistency term on perturbed
unlabelled points, using soft-target cross-entropy against the teacher and
masking out points whose teacher confidence is at or below 0.97. Accuracy is
measured on a 256×256 grid against the sign of the true distance map.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from PIL import Image, ImageDraw
from pydantic import BaseModel, ConfigDict, Field

from src.artifacts.netpbm import write_ppm
from src.consistency.trainer import StepReport, TrainConfig, init_trainer, run_training, write_step_reports
from src.consistency.variants import ConsistencyPlan, ConsistencyVariant
from src.logging.runlog import RunTimer, get_run_logger, init_worker, run_id_var
from src.nn.network import Network, build_mlp, forward
from src.rng import stream
from src.toy2d.boundary import BoundarySpec, DistanceMap, load_boundary, pixel_centres
from src.toy2d.dataset import (
    DataMode,
    ToyDataset,
    constrained_perturb_batch,
    isotropic_perturb_batch,
    sample_toy_dataset,
)

logger = get_run_logger("toy2d.experiment")

ToyVariantName = Literal["supervised", "isotropic", "constrained"]

_EVAL_CHUNK = 8192


class ToyConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    variant: ToyVariantName = "constrained"
    mode: DataMode = "no-gap"
    n_sup: int = Field(default=2, ge=1)  # per class
    n_unsup: int = Field(default=2000, ge=1)
    gap_width: float = Field(default=0.3, ge=0)
    sigma: float = Field(default=0.117, ge=0)
    tol: float = Field(default=0.016, ge=0)
    hidden: list[int] = Field(default_factory=lambda: [512, 512, 512])
    steps: int = Field(default=5000, ge=0)
    batch_unsup: int = Field(default=256, ge=1)
    cons_weight: float = Field(default=10.0, ge=0)
    conf_threshold: float = Field(default=0.97, ge=0, le=1)
    ema_alpha: float = Field(default=0.99, ge=0, lt=1)
    lr: float = Field(default=1e-3, gt=0)
    seed: int = 0
    grid: int = Field(default=256, ge=2)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            method="baseline" if self.variant == "supervised" else self.variant,
            cons_weight=0.0 if self.variant == "supervised" else self.cons_weight,
            conf_threshold=self.conf_threshold,
            conf_mode="mask",
            ema_alpha=self.ema_alpha,
            steps=self.steps,
            batch_sup=2 * self.n_sup,
            batch_unsup=self.batch_unsup,
            lr=self.lr,
            seed=self.seed,
        )


class IsotropicVariant(ConsistencyVariant):
    """Gaussian perturbation of every unlabelled point, no rejection."""

    name = "isotropic"

    def __init__(self, sigma: float):
        self.sigma = sigma

    def plan(self, student, teacher, x, rng):
        target, _ = forward(teacher, x)
        return ConsistencyPlan(
            student_input=isotropic_perturb_batch(x, self.sigma, rng).astype(x.dtype),
            target=target,
            confidence=target.max(axis=1),
            distance="bce",
        )


class ConstrainedVariant(ConsistencyVariant):
    """Gaussian perturbation kept only where it follows the distance-map contour."""

    name = "constrained"

    def __init__(self, dmap: DistanceMap, sigma: float, tol: float):
        self.dmap = dmap
        self.sigma = sigma
        self.tol = tol
        self.proposed = 0
        self.rejected = 0

    def plan(self, student, teacher, x, rng):
        target, _ = forward(teacher, x)
        perturbed, accepted = constrained_perturb_batch(x, self.dmap, self.sigma, self.tol, rng)
        self.proposed += len(accepted)
        self.rejected += int((~accepted).sum())
        return ConsistencyPlan(
            student_input=perturbed.astype(x.dtype),
            target=target,
            confidence=target.max(axis=1),
            pixel_mask=accepted.astype(x.dtype),
            distance="bce",
        )


@dataclass
class ToyReport:
    variant: str
    mode: str
    seed: int
    grid_accuracy: float  # teacher network
    student_accuracy: float
    rejected_fraction: float
    steps: int
    runtime_s: float = 0.0
    reports: list[StepReport] = field(default_factory=list, repr=False)

    CSV_HEADER = ("variant", "mode", "seed", "grid_accuracy", "student_accuracy", "rejected_fraction", "steps", "runtime_s")

    def row(self) -> tuple:
        return (self.variant, self.mode, self.seed, self.grid_accuracy, self.student_accuracy,
                self.rejected_fraction, self.steps, self.runtime_s)


def grid_points(n: int) -> np.ndarray:
    """n² pixel-centre points covering [−1, 1]², row-major with row ↔ y."""
    c = pixel_centres(n)
    ys, xs = np.meshgrid(c, c, indexing="ij")
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def predict_proba(net: Network, points: np.ndarray) -> np.ndarray:
    dtype = net.params.dtype
    out = [forward(net, points[i:i + _EVAL_CHUNK].astype(dtype))[0] for i in range(0, len(points), _EVAL_CHUNK)]
    return np.concatenate(out)


def grid_accuracy(net: Network, dmap: DistanceMap, n: int = 256) -> float:
    """Agreement of argmax predictions with sign(m) on an n×n grid."""
    points = grid_points(n)
    predicted = predict_proba(net, points).argmax(axis=1)
    return float((predicted == dmap.labels_at(points)).mean())


def run_toy_experiment(
    data: ToyDataset, dmap: DistanceMap, cfg: ToyConfig, out_dir: str | Path | None = None
) -> ToyReport:
    train_cfg = cfg.train_config()
    net = build_mlp([2, *cfg.hidden, 2], seed=cfg.seed)
    dtype = net.params.dtype
    state = init_trainer(net, train_cfg)

    variant: ConsistencyVariant | None = None
    if cfg.variant == "isotropic":
        variant = IsotropicVariant(cfg.sigma)
    elif cfg.variant == "constrained":
        variant = ConstrainedVariant(dmap, cfg.sigma, cfg.tol)

    sup = (data.sup_points.astype(dtype), data.sup_labels)
    unsup_pool = data.unsup_points.astype(dtype)
    batch = min(cfg.batch_unsup, len(unsup_pool))

    def sample_unsup(rng: np.random.Generator) -> np.ndarray:
        return unsup_pool[rng.choice(len(unsup_pool), size=batch, replace=False)]

    with RunTimer() as timer:
        reports = run_training(state, lambda rng: sup, sample_unsup, train_cfg, variant)

    rejected = 0.0
    if isinstance(variant, ConstrainedVariant) and variant.proposed:
        rejected = variant.rejected / variant.proposed
        logger.info("constrained perturbation rejections", extra={"run_data": {
            "proposed": variant.proposed, "rejected": variant.rejected}})

    report = ToyReport(
        variant=cfg.variant,
        mode=cfg.mode,
        seed=cfg.seed,
        grid_accuracy=grid_accuracy(state.teacher, dmap, cfg.grid),
        student_accuracy=grid_accuracy(state.student, dmap, cfg.grid),
        rejected_fraction=rejected,
        steps=cfg.steps,
        runtime_s=timer.elapsed_s,
        reports=reports,
    )
    logger.info("toy run finished", extra={"run_data": {
        "variant": cfg.variant, "mode": cfg.mode, "seed": cfg.seed,
        "grid_accuracy": report.grid_accuracy, "student_accuracy": report.student_accuracy}})

    if out_dir is not None:
        out = Path(out_dir)
        stem = f"{cfg.variant}_{cfg.mode}_seed{cfg.seed}"
        write_ppm(out / f"{stem}_proba.ppm", render_probability_field(state.teacher, dmap, data, cfg.grid))
        write_step_reports(out / f"{stem}_steps.csv", reports)
    return report


def _draw_points(rgb: np.ndarray, data: ToyDataset, size: int) -> np.ndarray:
    """Overdraw supervised points (class 0 blue, class 1 red) on a display-oriented image."""
    img = Image.fromarray(np.round(np.clip(rgb, 0, 1) * 255).astype(np.uint8))
    draw = ImageDraw.Draw(img)
    radius = max(2, size // 64)
    for (x, y), label in zip(data.sup_points, data.sup_labels):
        px = (x + 1.0) / 2.0 * size
        py = (1.0 - y) / 2.0 * size  # y up
        colour = (40, 40, 255) if label == 0 else (255, 40, 40)
        draw.ellipse([px - radius, py - radius, px + radius, py + radius], fill=colour, outline=(0, 0, 0))
    return np.asarray(img)


def render_probability_field(net: Network, dmap: DistanceMap, data: ToyDataset, n: int = 256) -> np.ndarray:
    """Class-1 probability as a red→green ramp, the true boundary in black, supervised points on top."""
    p1 = predict_proba(net, grid_points(n))[:, 1].reshape(n, n)
    rgb = np.stack([1.0 - p1, p1, 0.25 * np.ones_like(p1)], axis=-1)
    near = np.abs(dmap.value_at(grid_points(n)).reshape(n, n)) < 2.0 / n
    rgb[near] = 0.0
    return _draw_points(np.flipud(rgb), data, n)


def render_distance_map(dmap: DistanceMap, spacing: float = 0.1) -> np.ndarray:
    """Signed distance as a diverging ramp with contour lines every `spacing` domain units."""
    m = dmap.grid
    scale = max(np.abs(m).max(), 1e-12)
    t = m / scale
    rgb = np.stack([np.clip(-t, 0, 1), np.clip(t, 0, 1), 1.0 - np.abs(t)], axis=-1) * 0.8 + 0.2
    phase = np.abs(m / spacing - np.round(m / spacing)) * spacing
    rgb[phase < dmap.pitch] = 0.0
    return np.flipud(rgb)


def toy_cell(cfg: ToyConfig, boundary: BoundarySpec, out_dir: str | Path | None = None) -> ToyReport:
    """One (variant, mode, seed) run; the dataset depends only on (boundary, mode, seed)."""
    dmap = load_boundary(boundary)
    data = sample_toy_dataset(dmap, cfg.mode, cfg.n_sup, cfg.n_unsup, cfg.gap_width, stream(cfg.seed, "data", "toy"))
    return run_toy_experiment(data, dmap, cfg, out_dir)


def run_toy_seeds(
    cfg: ToyConfig,
    boundary: BoundarySpec,
    seeds: list[int],
    jobs: int = 1,
    out_dir: str | Path | None = None,
) -> list[ToyReport]:
    """Independent runs per seed, in seed order; jobs > 1 runs them in worker processes."""
    cells = [cfg.model_copy(update={"seed": s}) for s in seeds]
    if jobs <= 1:
        return [toy_cell(c, boundary, out_dir) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs, initializer=init_worker, initargs=(run_id_var.get(),)) as pool:
        return list(pool.map(toy_cell, cells, [boundary] * len(cells), [out_dir] * len(cells)))
