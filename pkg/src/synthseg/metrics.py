"""Segmentation metrics."""

import numpy as np

from src.consistency.losses import DEFAULT_IGNORE_LABEL
from src.errors import ConfigError, DataError, ShapeError


def confusion_matrix(pred: np.ndarray, gt: np.ndarray, n_classes: int, ignore_label: int = DEFAULT_IGNORE_LABEL) -> np.ndarray:
    """K×K counts, rows = ground truth, columns = prediction; ignored pixels dropped."""
    if n_classes < 1:
        raise ConfigError(f"class count must be >= 1, got {n_classes}", key="n_classes")
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    keep = gt != ignore_label
    g = gt[keep].astype(np.int64)
    p = pred[keep].astype(np.int64)
    if np.any((g < 0) | (g >= n_classes)) or np.any((p < 0) | (p >= n_classes)):
        raise DataError(f"label outside [0, {n_classes})")
    return np.bincount(n_classes * g + p, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def iou_per_class(conf: np.ndarray) -> np.ndarray:
    """TP / (TP + FP + FN); NaN for classes absent from both prediction and ground truth."""
    tp = np.diag(conf).astype(np.float64)
    union = conf.sum(axis=0) + conf.sum(axis=1) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, tp / union, np.nan)


def miou(pred: np.ndarray, gt: np.ndarray, n_classes: int, ignore_label: int = DEFAULT_IGNORE_LABEL) -> float:
    """Mean IoU over the classes present in gt or pred."""
    ious = iou_per_class(confusion_matrix(pred, gt, n_classes, ignore_label))
    if np.all(np.isnan(ious)):
        raise DataError("no labelled pixels to score")
    return float(np.nanmean(ious))
