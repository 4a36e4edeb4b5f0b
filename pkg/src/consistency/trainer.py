"""Mean-teacher training: supervised loss plus modulated consistency.

One step:

    total = L_sup + cons_weight × conf_factor × L_cons

followed by one optimizer step on the student and an EMA update of every
teacher parameter. The teacher output is a constant target; it never
receives gradients.
"""

from collections.abc import Callable
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.artifacts.tables import write_csv
from src.config.settings import get_settings
from src.consistency.losses import (
    DEFAULT_IGNORE_LABEL,
    bce_cons,
    bce_cons_grad,
    confidence_proportion,
    cross_entropy,
    cross_entropy_grad,
    sq_err_cons,
    sq_err_cons_grad,
)
from src.consistency.variants import ConsistencyPlan, ConsistencyVariant, get_variant
from src.errors import DivergenceError, NonFiniteError
from src.logging.runlog import get_run_logger
from src.nn.network import Network, backward, forward
from src.nn.optim import AdamState, EmaConfig, SgdState, adam_step, ema_update, sgd_step
from src.perturb.affine import AffineRanges
from src.perturb.blend import LambdaDist
from src.perturb.vat import VatConfig
from src.rng import stream

logger = get_run_logger("consistency.trainer")

Method = Literal["baseline", "cutout", "cutmix", "stdaug", "ict", "vat", "isotropic", "constrained"]

MASK_METHODS = frozenset({"cutout", "cutmix"})

# Lesion-segmentation weights: 1 for the mask methods under the summed-class
# reduction; the toy 2D runs use 10
_DEFAULT_CONS_WEIGHTS: dict[str, float] = {
    "baseline": 0.0,
    "cutout": 1.0,
    "cutmix": 1.0,
    "stdaug": 0.003,
    "ict": 0.01,
    "vat": 0.1,
    "isotropic": 10.0,
    "constrained": 10.0,
}

STEP_CSV_HEADER = ("step", "l_sup", "l_cons", "conf_factor", "total")


def default_cons_weight(method: str) -> float:
    return _DEFAULT_CONS_WEIGHTS[method]


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    method: Method = "cutmix"
    cons_weight: float | None = Field(default=None, ge=0)  # None = per-method default
    conf_threshold: float = Field(default=0.97, ge=0, le=1)
    conf_mode: Literal["proportion", "mask"] = "proportion"
    modulate_all: bool = True  # False: only the mask methods are modulated
    ema_alpha: float = Field(default=0.99, ge=0, lt=1)
    steps: int = Field(default=2000, ge=0)
    batch_sup: int = Field(default=4, ge=1)
    batch_unsup: int = Field(default=4, ge=0)
    optimizer: Literal["adam", "sgd"] = "adam"
    lr: float = Field(default=1e-3, gt=0)  # pretrained full-scale runs use 3e-5 (adam) / 0.05 (sgd)
    seed: int = 0
    ignore_label: int = DEFAULT_IGNORE_LABEL
    ict_lambda_dist: LambdaDist = "uniform"
    ict_beta: float = Field(default=1.0, gt=0)
    vat: VatConfig = Field(default_factory=VatConfig)
    affine: AffineRanges = Field(default_factory=AffineRanges)

    @model_validator(mode="after")
    def _fill_cons_weight(self) -> "TrainConfig":
        if self.cons_weight is None:
            self.cons_weight = default_cons_weight(self.method)
        return self


def make_variant(cfg: TrainConfig) -> ConsistencyVariant:
    """Variant for cfg.method built from the config's perturbation options."""
    if cfg.method == "stdaug":
        return get_variant("stdaug", ranges=cfg.affine)
    if cfg.method == "ict":
        return get_variant("ict", dist=cfg.ict_lambda_dist, beta_a=cfg.ict_beta)
    if cfg.method == "vat":
        return get_variant("vat", cfg=cfg.vat)
    return get_variant(cfg.method)


@dataclass
class TrainerState:
    student: Network
    teacher: Network
    opt: AdamState | SgdState
    ema: EmaConfig
    rng: np.random.Generator  # perturbation stream ("mask" or "vat")
    step: int = 0


@dataclass
class StepReport:
    step: int
    l_sup: float
    l_cons: float
    conf_factor: float
    total: float
    vat_skipped: int = 0

    def row(self) -> tuple:
        return (self.step, self.l_sup, self.l_cons, self.conf_factor, self.total)


def init_trainer(student: Network, cfg: TrainConfig) -> TrainerState:
    """Teacher starts as an exact copy of the student."""
    if cfg.optimizer == "sgd":
        opt = SgdState.zeros_like(student.params, lr=cfg.lr)
    else:
        opt = AdamState.zeros_like(student.params, lr=cfg.lr)
    return TrainerState(
        student=student,
        teacher=student.copy(),
        opt=opt,
        ema=EmaConfig(cfg.ema_alpha),
        rng=stream(cfg.seed, "vat" if cfg.method == "vat" else "mask"),
    )


def _consistency(
    state: TrainerState, plan: ConsistencyPlan, cfg: TrainConfig, modulated: bool
) -> tuple[float, float, float, np.ndarray | None]:
    """Return (l_cons, conf_factor, loss multiplier, dParams contribution or None)."""
    factor = confidence_proportion(plan.confidence, cfg.conf_threshold) if modulated else 1.0
    weights = plan.pixel_mask
    multiplier = cfg.cons_weight * factor
    allow_empty = plan.skipped > 0
    if modulated and cfg.conf_mode == "mask":
        confident = (plan.confidence > cfg.conf_threshold).astype(plan.target.dtype)
        weights = confident if weights is None else weights * confident
        multiplier = cfg.cons_weight
        allow_empty = True

    pred, tape = forward(state.student, plan.student_input, cache=True)
    if plan.distance == "bce":
        l_cons = bce_cons(pred, plan.target, weights)
        dy = bce_cons_grad(pred, plan.target, weights)
    else:
        l_cons = sq_err_cons(pred, plan.target, weights, allow_empty=allow_empty)
        dy = sq_err_cons_grad(pred, plan.target, weights, allow_empty=allow_empty)

    if multiplier == 0:
        return l_cons, factor, multiplier, None
    dparams, _ = backward(state.student, tape, multiplier * dy)
    return l_cons, factor, multiplier, dparams


def train_step(
    state: TrainerState,
    sup_batch: tuple[np.ndarray, np.ndarray],
    unsup_batch: np.ndarray | None,
    cfg: TrainConfig,
    variant: ConsistencyVariant | None = None,
) -> StepReport:
    """One mean-teacher step; mutates state and returns the step's losses."""
    x_sup, y_sup = sup_batch
    try:
        pred, tape = forward(state.student, x_sup, cache=True)
        l_sup = cross_entropy(pred, y_sup, cfg.ignore_label)
        grads, _ = backward(state.student, tape, cross_entropy_grad(pred, y_sup, cfg.ignore_label))

        l_cons, factor, multiplier, skipped = 0.0, 0.0, 0.0, 0
        if cfg.method != "baseline" and unsup_batch is not None and len(unsup_batch):
            variant = variant or make_variant(cfg)
            plan = variant.plan(state.student, state.teacher, unsup_batch, state.rng)
            modulated = cfg.modulate_all or cfg.method in MASK_METHODS
            l_cons, factor, multiplier, cons_grads = _consistency(state, plan, cfg, modulated)
            skipped = plan.skipped
            if cons_grads is not None:
                grads = grads + cons_grads
    except NonFiniteError as e:
        raise DivergenceError(f"non-finite values at step {state.step}: {e}") from e

    total = l_sup + multiplier * l_cons
    if not np.isfinite(total) or not np.all(np.isfinite(grads)):
        raise DivergenceError(f"non-finite total loss at step {state.step}")

    if isinstance(state.opt, SgdState):
        new_params, state.opt = sgd_step(state.opt, state.student.params, grads)
    else:
        new_params, state.opt = adam_step(state.opt, state.student.params, grads)
    state.student.set_params(new_params)
    state.teacher.set_params(ema_update(state.teacher.params, state.student.params, state.ema))
    state.step += 1

    if skipped:
        logger.warning("VAT term skipped for some samples", extra={"run_data": {"step": state.step, "skipped": skipped}})
    return StepReport(state.step, l_sup, l_cons, factor, float(total), skipped)


BatchSampler = Callable[[np.random.Generator], object]


def run_training(
    state: TrainerState,
    sample_sup: BatchSampler,
    sample_unsup: BatchSampler | None,
    cfg: TrainConfig,
    variant: ConsistencyVariant | None = None,
    csv_path: str | Path | None = None,
) -> list[StepReport]:
    """cfg.steps train_steps with independent supervised / unsupervised data streams."""
    sup_rng = stream(cfg.seed, "data", "sup")
    unsup_rng = stream(cfg.seed, "data", "unsup")
    log_every = max(1, get_settings().log_every)
    if variant is None and cfg.method != "baseline":
        variant = make_variant(cfg)

    reports: list[StepReport] = []
    for _ in range(cfg.steps):
        sup = sample_sup(sup_rng)
        unsup = sample_unsup(unsup_rng) if sample_unsup is not None and cfg.method != "baseline" else None
        report = train_step(state, sup, unsup, cfg, variant)
        reports.append(report)
        if report.step % log_every == 0:
            logger.info("train progress", extra={"run_data": asdict(report)})

    if csv_path is not None:
        write_step_reports(csv_path, reports)
    return reports


def write_step_reports(path: str | Path, reports: list[StepReport]) -> None:
    """StepReport stream as CSV: step,l_sup,l_cons,conf_factor,total."""
    write_csv(path, STEP_CSV_HEADER, (r.row() for r in reports))
