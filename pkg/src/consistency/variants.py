"""Consistency-loss variants: how the student input and teacher target are built.

Every variant turns an unsupervised batch into a ConsistencyPlan: the
perturbed input the student sees, the constant pseudo-target it must match,
which pixels count, and the teacher confidence aligned with the target. The
trainer takes care of the loss and its gradient, so a variant never touches
the optimizer.

Batches that need a partner image (CutMix, ICT) pair element i with element
B − 1 − i of the same batch.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Literal

import numpy as np

from src.consistency.losses import sq_err_cons
from src.errors import ConfigError, ShapeError
from src.nn.network import Network, forward
from src.perturb.affine import AffineRanges, sample_affine, warp
from src.perturb.blend import LambdaDist, ict_blend, sample_lambda
from src.perturb.masks import batch_masks, mix
from src.perturb.vat import VatConfig, vat_directions

Distance = Literal["sq", "bce"]


@dataclass
class ConsistencyPlan:
    student_input: np.ndarray
    target: np.ndarray  # constant pseudo-target, same shape as the student output
    confidence: np.ndarray  # per-pixel teacher confidence aligned with target
    pixel_mask: np.ndarray | None = None  # weights over output pixels, None = all
    distance: Distance = "sq"
    skipped: int = 0  # samples dropped from the term (zero VAT gradient, rejected points)


class ConsistencyVariant(ABC):
    """Base class for perturbation schemes."""

    name: str = ""
    mask_based: bool = False

    @abstractmethod
    def plan(self, student: Network, teacher: Network, x: np.ndarray, rng: np.random.Generator) -> ConsistencyPlan:
        ...


def _teacher(teacher: Network, x: np.ndarray) -> np.ndarray:
    y, _ = forward(teacher, x)
    return y


def _paired(x: np.ndarray) -> np.ndarray:
    return x[::-1]


def _check_pair(x_a: np.ndarray, x_b: np.ndarray) -> None:
    if x_a.shape != x_b.shape:
        raise ShapeError(f"paired batches differ: {x_a.shape} vs {x_b.shape}")


class CutOutVariant(ConsistencyVariant):
    name = "cutout"
    mask_based = True

    def plan(self, student, teacher, x, rng):
        masks = batch_masks("cutout", x.shape[0], x.shape[2], x.shape[3], rng).astype(x.dtype)
        target = _teacher(teacher, x)
        return ConsistencyPlan(
            student_input=x * masks,
            target=target,
            confidence=target.max(axis=1),
            pixel_mask=masks,
        )


class CutMixVariant(ConsistencyVariant):
    name = "cutmix"
    mask_based = True

    def plan(self, student, teacher, x, rng):
        return self.plan_pair(teacher, x, _paired(x), rng)

    def plan_pair(self, teacher, x_a, x_b, rng) -> ConsistencyPlan:
        _check_pair(x_a, x_b)
        masks = batch_masks("cutmix", x_a.shape[0], x_a.shape[2], x_a.shape[3], rng).astype(x_a.dtype)
        pred_a, pred_b = _teacher(teacher, x_a), _teacher(teacher, x_b)
        target = mix(pred_a, pred_b, masks)
        return ConsistencyPlan(
            student_input=mix(x_a, x_b, masks),
            target=target,
            confidence=mix(pred_a.max(axis=1), pred_b.max(axis=1), masks[:, 0]),
        )


class StdAugVariant(ConsistencyVariant):
    """Affine augmentation; the teacher sees the original image and its prediction is warped."""

    name = "stdaug"

    def __init__(self, ranges: AffineRanges | None = None):
        self.ranges = ranges or AffineRanges()

    def plan(self, student, teacher, x, rng):
        pred = _teacher(teacher, x)
        size = x.shape[2:]
        inputs, targets, valids = [], [], []
        for i in range(x.shape[0]):
            p = sample_affine(self.ranges, rng, size)
            warped_x, _ = warp(x[i], p, "image")
            warped_pred, valid = warp(pred[i], p, "probmap")
            inputs.append(warped_x)
            targets.append(warped_pred)
            valids.append(valid)
        target = np.stack(targets)
        return ConsistencyPlan(
            student_input=np.stack(inputs),
            target=target,
            confidence=target.max(axis=1),
            pixel_mask=np.stack(valids),
        )


class IctVariant(ConsistencyVariant):
    name = "ict"

    def __init__(self, dist: LambdaDist = "uniform", beta_a: float = 1.0):
        self.dist = dist
        self.beta_a = beta_a

    def plan(self, student, teacher, x, rng):
        return self.plan_pair(teacher, x, _paired(x), rng)

    def plan_pair(self, teacher, x_a, x_b, rng, lam: float | None = None) -> ConsistencyPlan:
        _check_pair(x_a, x_b)
        if lam is None:
            lam = sample_lambda(rng, self.dist, self.beta_a)
        pred_a, pred_b = _teacher(teacher, x_a), _teacher(teacher, x_b)
        target = ict_blend(pred_a, pred_b, lam)
        return ConsistencyPlan(
            student_input=ict_blend(x_a, x_b, lam),
            target=target,
            confidence=target.max(axis=1),
        )


class VatVariant(ConsistencyVariant):
    """Adversarial direction against the student's own clean prediction."""

    name = "vat"

    def __init__(self, cfg: VatConfig | None = None):
        self.cfg = cfg or VatConfig()

    def plan(self, student, teacher, x, rng):
        r_adv, valid = vat_directions(student, x, self.cfg, rng)
        target = _teacher(student, x)
        pixel_mask = np.broadcast_to(valid.reshape(-1, *([1] * (target.ndim - 2))), (x.shape[0], *target.shape[2:]))
        return ConsistencyPlan(
            student_input=x + r_adv,
            target=target,
            confidence=_teacher(teacher, x).max(axis=1),
            pixel_mask=pixel_mask.astype(x.dtype),
            skipped=int((~valid).sum()),
        )


_VARIANTS: dict[str, type[ConsistencyVariant]] = {
    "cutout": CutOutVariant,
    "cutmix": CutMixVariant,
    "stdaug": StdAugVariant,
    "ict": IctVariant,
    "vat": VatVariant,
}


def get_variant(name: str, **options) -> ConsistencyVariant:
    """Build a variant by method name; options go to its constructor."""
    if name not in _VARIANTS:
        raise ConfigError(f"Unknown consistency method: {name}", key="method")
    return _VARIANTS[name](**options)


def _student_distance(student: Network, plan: ConsistencyPlan) -> float:
    pred, _ = forward(student, plan.student_input)
    return sq_err_cons(pred, plan.target, plan.pixel_mask, allow_empty=plan.skipped > 0)


def cons_cutout(student: Network, teacher: Network, x: np.ndarray, rng: np.random.Generator) -> float:
    """‖M ⊙ (f(M ⊙ x) − g(x))‖², averaged over the uncut pixels."""
    return _student_distance(student, CutOutVariant().plan(student, teacher, x, rng))


def cons_cutmix(
    student: Network, teacher: Network, x_a: np.ndarray, x_b: np.ndarray, rng: np.random.Generator
) -> float:
    """‖mix(g(x_a), g(x_b), M) − f(mix(x_a, x_b, M))‖²."""
    return _student_distance(student, CutMixVariant().plan_pair(teacher, x_a, x_b, rng))


def cons_stdaug(
    student: Network, teacher: Network, x: np.ndarray, rng: np.random.Generator, ranges: AffineRanges | None = None
) -> float:
    return _student_distance(student, StdAugVariant(ranges).plan(student, teacher, x, rng))


def cons_ict(
    student: Network,
    teacher: Network,
    x_a: np.ndarray,
    x_b: np.ndarray,
    rng: np.random.Generator,
    lam: float | None = None,
) -> float:
    return _student_distance(student, IctVariant().plan_pair(teacher, x_a, x_b, rng, lam))


def cons_vat(student: Network, x: np.ndarray, cfg: VatConfig, rng: np.random.Generator) -> float:
    """Distance between f(x) (constant) and f(x + r_adv); images with zero gradient contribute 0."""
    return _student_distance(student, VatVariant(cfg).plan(student, student, x, rng))
