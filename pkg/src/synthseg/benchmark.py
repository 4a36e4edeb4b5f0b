"""Semi-supervised segmentation benchmark on procedural scenes.

For every (method, seed) cell the same labelled subset and the same
initial network are used, so methods differ only in their consistency term.
The teacher network's mIoU on held-out scenes is the headline number; the
student's is reported alongside.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.artifacts.tables import write_csv
from src.consistency.trainer import TrainConfig, init_trainer, run_training
from src.errors import ConfigError, DivergenceError
from src.logging.runlog import RunTimer, get_run_logger, init_worker, run_id_var
from src.nn.network import Network, build_encoder_decoder, forward, save_checkpoint
from src.rng import stream
from src.synthseg.metrics import miou
from src.synthseg.scenes import SceneSpec, gen_scene

logger = get_run_logger("synthseg.benchmark")

BENCHMARK_METHODS = ("baseline", "cutout", "cutmix", "stdaug", "ict", "vat")
FULL_CELL = "full"
VAL_SEED_OFFSET = 1_000_000

CELL_CSV_HEADER = ("method", "seed", "n_labeled", "miou", "steps", "runtime_s", "student_miou", "status")
SUMMARY_CSV_HEADER = ("method", "n_labeled", "miou_mean", "miou_std", "n_seeds")


def _default_train() -> TrainConfig:
    return TrainConfig(method="baseline", steps=2000, batch_sup=4, batch_unsup=4)


class BenchmarkConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    methods: list[str] = Field(default_factory=lambda: ["baseline", "cutout", "cutmix"])
    n_labeled: int = Field(default=10, ge=1)
    n_unlabeled: int = Field(default=490, ge=0)
    n_val: int = Field(default=100, ge=1)
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    full: bool = False  # also train a fully supervised cell on every training scene
    widths: tuple[int, int, int] = (16, 32, 64)
    flip: bool = True  # random horizontal flips of supervised batches
    save_checkpoints: bool = False
    cons_weight: float | None = Field(default=None, ge=0)  # None = per-method default
    scene: SceneSpec = Field(default_factory=SceneSpec)
    train: TrainConfig = Field(default_factory=_default_train)

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, methods: list[str]) -> list[str]:
        unknown = [m for m in methods if m not in BENCHMARK_METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {list(BENCHMARK_METHODS)}")
        return methods

    @property
    def n_train(self) -> int:
        return self.n_labeled + self.n_unlabeled


@dataclass
class CellResult:
    method: str
    seed: int
    n_labeled: int
    miou: float  # teacher network; NaN when the run diverged
    student_miou: float
    steps: int
    runtime_s: float
    status: str = "ok"

    def row(self) -> tuple:
        return (self.method, self.seed, self.n_labeled, self.miou, self.steps, self.runtime_s,
                self.student_miou, self.status)


@dataclass
class BenchmarkReport:
    cells: list[CellResult]
    summary: dict[str, tuple[float, float, int]]  # method -> (mean, std, seeds that finished)

    def summary_rows(self) -> list[tuple]:
        labeled = {c.method: c.n_labeled for c in self.cells}
        rows = []
        for method, (mean, std, count) in self.summary.items():
            n_labeled = labeled[method]
            rows.append((method, n_labeled, mean, std, count))
        return rows


def labeled_split(seed: int, n_train: int, n_labeled: int) -> tuple[np.ndarray, np.ndarray]:
    """(labelled, unlabelled) scene indices; a pure function of (seed, n_train, n_labeled)."""
    if n_labeled > n_train:
        raise ConfigError(f"n_labeled {n_labeled} exceeds the {n_train} training scenes", key="n_labeled")
    perm = stream(seed, "data", "split").permutation(n_train)
    return np.sort(perm[:n_labeled]), np.sort(perm[n_labeled:])


def _stack(scenes, idx, dtype) -> tuple[np.ndarray, np.ndarray]:
    return (np.stack([scenes[i].image for i in idx]).astype(dtype),
            np.stack([scenes[i].labels for i in idx]))


def _predict(net: Network, images: np.ndarray, chunk: int = 16) -> np.ndarray:
    preds = [forward(net, images[i:i + chunk])[0].argmax(axis=1) for i in range(0, len(images), chunk)]
    return np.concatenate(preds)


def run_cell(cfg: BenchmarkConfig, method: str, seed: int, out_dir: str | Path | None = None) -> CellResult:
    """Train and evaluate one (method, seed) cell. method may be 'full'."""
    train_idx = np.arange(cfg.n_train)
    scenes = [gen_scene(cfg.scene, int(i)) for i in train_idx]
    val = [gen_scene(cfg.scene, VAL_SEED_OFFSET + i) for i in range(cfg.n_val)]

    base = cfg.train.model_dump(exclude={"cons_weight", "method", "seed"})
    if method == FULL_CELL:
        labeled, unlabeled = train_idx, np.array([], dtype=np.int64)
        train_cfg = TrainConfig.model_validate({**base, "method": "baseline", "seed": seed})
    else:
        labeled, unlabeled = labeled_split(seed, cfg.n_train, cfg.n_labeled)
        train_cfg = TrainConfig.model_validate(
            {**base, "method": method, "seed": seed, "cons_weight": cfg.cons_weight})

    net = build_encoder_decoder(3, cfg.scene.n_classes, (cfg.scene.size, cfg.scene.size), seed, cfg.widths)
    dtype = net.params.dtype
    sup_x, sup_y = _stack(scenes, labeled, dtype)
    unsup_x = _stack(scenes, unlabeled, dtype)[0] if len(unlabeled) else None

    def sample_sup(rng: np.random.Generator):
        idx = rng.choice(len(sup_x), size=train_cfg.batch_sup, replace=len(sup_x) < train_cfg.batch_sup)
        x, y = sup_x[idx], sup_y[idx]
        if cfg.flip:
            flip = rng.random(len(idx)) < 0.5
            x = np.where(flip[:, None, None, None], x[..., ::-1], x)
            y = np.where(flip[:, None, None], y[..., ::-1], y)
        return x, y

    def sample_unsup(rng: np.random.Generator):
        idx = rng.choice(len(unsup_x), size=train_cfg.batch_unsup, replace=len(unsup_x) < train_cfg.batch_unsup)
        return unsup_x[idx]

    state = init_trainer(net, train_cfg)
    steps_csv = None
    if out_dir is not None:
        steps_csv = Path(out_dir) / f"{method}_seed{seed}_steps.csv"

    diverged: DivergenceError | None = None
    with RunTimer() as timer:
        try:
            run_training(state, sample_sup, sample_unsup if unsup_x is not None else None, train_cfg, csv_path=steps_csv)
        except DivergenceError as e:
            diverged = e
    if diverged is not None:
        logger.warning("cell diverged", extra={"run_data": {
            "method": method, "seed": seed, "error": str(diverged), "runtime_s": timer.elapsed_s}})
        return CellResult(method, seed, len(labeled), float("nan"), float("nan"), state.step, timer.elapsed_s, "diverged")

    val_x, val_y = _stack(val, range(len(val)), dtype)
    n_classes = cfg.scene.n_classes
    result = CellResult(
        method=method,
        seed=seed,
        n_labeled=len(labeled),
        miou=miou(_predict(state.teacher, val_x), val_y, n_classes),
        student_miou=miou(_predict(state.student, val_x), val_y, n_classes),
        steps=state.step,
        runtime_s=timer.elapsed_s,
    )
    if out_dir is not None and cfg.save_checkpoints:
        save_checkpoint(state.teacher, Path(out_dir) / f"{method}_seed{seed}_teacher.ckpt")
    logger.info("cell finished", extra={"run_data": {
        "method": method, "seed": seed, "miou": result.miou, "student_miou": result.student_miou,
        "runtime_s": result.runtime_s}})
    return result


def aggregate(cells: list[CellResult]) -> dict[str, tuple[float, float, int]]:
    """Mean and sample std-dev (ddof=1) of teacher mIoU per method, skipping diverged cells."""
    summary: dict[str, tuple[float, float, int]] = {}
    for method in dict.fromkeys(c.method for c in cells):
        values = np.array([c.miou for c in cells if c.method == method and c.status == "ok"])
        if len(values) == 0:
            summary[method] = (float("nan"), float("nan"), 0)
            continue
        std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        summary[method] = (float(values.mean()), std, len(values))
    return summary


def run_benchmark(cfg: BenchmarkConfig, jobs: int = 1, out_dir: str | Path | None = None) -> BenchmarkReport:
    """Every (seed, method) cell, plus the full-supervision cell per seed when cfg.full."""
    methods = list(cfg.methods) + ([FULL_CELL] if cfg.full else [])
    cells = [(m, s) for s in cfg.seeds for m in methods]
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)

    if jobs <= 1:
        results = [run_cell(cfg, m, s, out_dir) for m, s in cells]
    else:
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=init_worker, initargs=(run_id_var.get(),)
        ) as pool:
            futures = [pool.submit(run_cell, cfg, m, s, out_dir) for m, s in cells]
            results = [f.result() for f in futures]

    report = BenchmarkReport(results, aggregate(results))
    if out_dir is not None:
        write_csv(Path(out_dir) / "benchmark.csv", CELL_CSV_HEADER, (c.row() for c in results))
        write_csv(Path(out_dir) / "summary.csv", SUMMARY_CSV_HEADER, report.summary_rows())
    return report
