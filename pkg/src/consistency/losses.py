"""Supervised and consistency loss terms with their gradients.

Predictions are probability maps with the class axis at position 1:
B×K×H×W for segmentation, B×K for point classifiers. Every loss sums over
classes first and then averages over the remaining (pixel and batch) axes.
Gradient helpers return dLoss/d(student prediction); the teacher side is
always a constant target.
"""

import numpy as np

from src.errors import DataError, ShapeError

PROB_CLAMP = 1e-12
DEFAULT_IGNORE_LABEL = 255


def _pixel_weights(pred: np.ndarray, pixel_mask: np.ndarray | None) -> np.ndarray:
    """Broadcast a pixel mask to pred's shape without the class axis."""
    shape = (pred.shape[0], *pred.shape[2:])
    if pixel_mask is None:
        return np.ones(shape, dtype=pred.dtype)
    m = pixel_mask
    if m.ndim == len(shape) + 1 and m.shape[1] == 1:
        m = m[:, 0]
    try:
        return np.broadcast_to(m, shape).astype(pred.dtype)
    except ValueError as e:
        raise ShapeError(f"pixel mask {pixel_mask.shape} does not match predictions {pred.shape}") from e


def _check_target(pred: np.ndarray, target: np.ndarray, ignore_label: int) -> np.ndarray:
    if pred.shape[0] != target.shape[0] or pred.shape[2:] != target.shape[1:]:
        raise ShapeError(f"target {target.shape} does not match predictions {pred.shape}")
    keep = target != ignore_label
    n_classes = pred.shape[1]
    if np.any((target[keep] < 0) | (target[keep] >= n_classes)):
        raise DataError(f"target class outside [0, {n_classes})")
    if not keep.any():
        raise DataError("every pixel is ignored")
    return keep


def cross_entropy(pred: np.ndarray, target: np.ndarray, ignore_label: int = DEFAULT_IGNORE_LABEL) -> float:
    """Mean over non-ignored pixels of −log p[target]."""
    keep = _check_target(pred, target, ignore_label)
    safe = np.where(keep, target, 0)
    picked = np.take_along_axis(pred, safe[:, None], axis=1)[:, 0]
    nll = -np.log(np.maximum(picked, PROB_CLAMP))
    return float(nll[keep].sum() / keep.sum())


def cross_entropy_grad(pred: np.ndarray, target: np.ndarray, ignore_label: int = DEFAULT_IGNORE_LABEL) -> np.ndarray:
    keep = _check_target(pred, target, ignore_label)
    safe = np.where(keep, target, 0)
    picked = np.take_along_axis(pred, safe[:, None], axis=1)[:, 0]
    # Clamped probabilities have zero derivative
    per_pixel = np.where(keep & (picked > PROB_CLAMP), -1.0 / np.maximum(picked, PROB_CLAMP), 0.0) / keep.sum()
    grad = np.zeros_like(pred)
    np.put_along_axis(grad, safe[:, None], per_pixel[:, None].astype(pred.dtype), axis=1)
    return grad


def sq_err_cons(
    a: np.ndarray, b: np.ndarray, pixel_mask: np.ndarray | None = None, allow_empty: bool = False
) -> float:
    """Σ_classes (a − b)² per pixel, then the mean over unmasked pixels and the batch.

    pixel_mask values act as weights (0/1 for hard masks).
    """
    if a.shape != b.shape:
        raise ShapeError(f"consistency operands differ: {a.shape} vs {b.shape}")
    weights = _pixel_weights(a, pixel_mask)
    total = weights.sum()
    if total <= 0:
        if allow_empty:
            return 0.0
        raise DataError("consistency mask leaves no pixels")
    diff = a - b
    per_pixel = (diff * diff).sum(axis=1)
    return float((per_pixel * weights).sum() / total)


def sq_err_cons_grad(
    student: np.ndarray, target: np.ndarray, pixel_mask: np.ndarray | None = None, allow_empty: bool = False
) -> np.ndarray:
    weights = _pixel_weights(student, pixel_mask)
    total = weights.sum()
    if total <= 0:
        if allow_empty:
            return np.zeros_like(student)
        raise DataError("consistency mask leaves no pixels")
    return 2.0 * (student - target) * (weights / total)[:, None]


def bce_cons(
    student: np.ndarray, teacher: np.ndarray, pixel_mask: np.ndarray | None = None
) -> float:
    """Soft-target cross-entropy −Σ_k t_k log s_k, averaged over unmasked positions.

    Minimised (at the teacher's entropy) when the student equals the teacher.
    A fully masked batch contributes 0.
    """
    if student.shape != teacher.shape:
        raise ShapeError(f"consistency operands differ: {student.shape} vs {teacher.shape}")
    weights = _pixel_weights(student, pixel_mask)
    total = weights.sum()
    if total <= 0:
        return 0.0
    per_pixel = -(teacher * np.log(np.maximum(student, PROB_CLAMP))).sum(axis=1)
    return float((per_pixel * weights).sum() / total)


def bce_cons_grad(
    student: np.ndarray, teacher: np.ndarray, pixel_mask: np.ndarray | None = None
) -> np.ndarray:
    weights = _pixel_weights(student, pixel_mask)
    total = weights.sum()
    if total <= 0:
        return np.zeros_like(student)
    return -teacher / np.maximum(student, PROB_CLAMP) * (weights / total)[:, None]


def confidence_mask(teacher_pred: np.ndarray, threshold: float) -> np.ndarray:
    """Per-pixel flag: max class probability strictly above threshold."""
    if teacher_pred.size == 0:
        raise DataError("confidence of an empty prediction")
    return teacher_pred.max(axis=1) > threshold


def confidence_factor(teacher_pred: np.ndarray, threshold: float) -> float:
    """Fraction of pixels (over the whole batch) whose teacher confidence exceeds threshold."""
    return float(confidence_mask(teacher_pred, threshold).mean())


def confidence_proportion(confidence: np.ndarray, threshold: float) -> float:
    """confidence_factor for a precomputed per-pixel confidence map."""
    if confidence.size == 0:
        raise DataError("confidence of an empty prediction")
    return float((confidence > threshold).mean())
