"""Toy datasets and distance-constrained perturbation on [−1, 1]²."""

from dataclasses import dataclass
from typing import Literal

import numpy as np

from src.errors import ConfigError, SamplingError
from src.logging.runlog import get_run_logger
from src.toy2d.boundary import DistanceMap

logger = get_run_logger("toy2d.dataset")

DataMode = Literal["gap", "no-gap"]

SUP_MARGIN = 0.2
_CANDIDATES_PER_ROUND = 4096
_MAX_ROUNDS = 256


@dataclass
class ToyDataset:
    sup_points: np.ndarray  # N×2 (x, y)
    sup_labels: np.ndarray  # N
    unsup_points: np.ndarray  # M×2
    mode: DataMode
    gap_width: float = 0.0


def _uniform(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(n, 2))


def sample_toy_dataset(
    dmap: DistanceMap,
    mode: DataMode,
    n_sup: int,
    n_unsup: int,
    gap_width: float,
    rng: np.random.Generator,
) -> ToyDataset:
    """n_sup labelled points per class with |m| > 0.2, plus n_unsup uniform points.

    In gap mode unsupervised points with |m| < gap_width / 2 are rejected,
    leaving an empty band around the boundary.
    """
    if mode not in ("gap", "no-gap"):
        raise ConfigError(f"Unknown toy data mode: {mode}", key="mode")
    if n_sup < 0 or n_unsup < 0 or gap_width < 0:
        raise ConfigError("point counts and gap width must be non-negative", key="n_sup")

    sup: dict[int, list[np.ndarray]] = {0: [], 1: []}
    unsup: list[np.ndarray] = []
    n_unsup_found = 0
    for _ in range(_MAX_ROUNDS):
        if all(len(sup[c]) >= n_sup for c in (0, 1)):
            break
        cand = _uniform(rng, _CANDIDATES_PER_ROUND)
        m = dmap.value_at(cand)
        for c, sel in ((1, m > SUP_MARGIN), (0, m < -SUP_MARGIN)):
            need = n_sup - len(sup[c])
            if need > 0:
                sup[c].extend(cand[sel][:need])
    if any(len(sup[c]) < n_sup for c in (0, 1)):
        raise SamplingError(f"could not place {n_sup} supervised points per class")

    for _ in range(_MAX_ROUNDS):
        if n_unsup_found >= n_unsup:
            break
        cand = _uniform(rng, _CANDIDATES_PER_ROUND)
        if mode == "gap":
            cand = cand[np.abs(dmap.value_at(cand)) >= gap_width / 2.0]
        take = cand[: n_unsup - n_unsup_found]
        unsup.append(take)
        n_unsup_found += len(take)
    if n_unsup_found < n_unsup:
        raise SamplingError(f"rejection sampling placed only {n_unsup_found} of {n_unsup} unsupervised points")

    sup_points = np.array(sup[0] + sup[1], dtype=np.float64).reshape(-1, 2)
    sup_labels = np.array([0] * n_sup + [1] * n_sup, dtype=np.int64)
    unsup_points = np.concatenate(unsup) if unsup else np.zeros((0, 2))
    logger.debug("toy dataset sampled", extra={"run_data": {
        "mode": mode, "n_sup": int(sup_labels.size), "n_unsup": int(len(unsup_points)), "gap_width": gap_width}})
    return ToyDataset(sup_points, sup_labels, unsup_points, mode, gap_width if mode == "gap" else 0.0)


def constrained_perturb_batch(
    points: np.ndarray,
    dmap: DistanceMap,
    sigma: float,
    tol: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """p̂ = p + h with h ~ N(0, σ²I); accepted where |m(p̂) − m(p)| ≤ tol and p̂ stays in the domain.

    Returns (p̂, accepted). Rejected rows are left at p.
    """
    perturbed = points + rng.normal(0.0, sigma, size=points.shape) if sigma > 0 else points.copy()
    inside = np.all((perturbed >= -1.0) & (perturbed <= 1.0), axis=1)
    accepted = inside & (np.abs(dmap.value_at(perturbed) - dmap.value_at(points)) <= tol)
    return np.where(accepted[:, None], perturbed, points), accepted


def constrained_perturb(
    p: np.ndarray, dmap: DistanceMap, sigma: float, tol: float, rng: np.random.Generator
) -> np.ndarray | None:
    """Single-point form; None when the perturbation is rejected."""
    perturbed, accepted = constrained_perturb_batch(np.asarray(p, dtype=np.float64).reshape(1, 2), dmap, sigma, tol, rng)
    return perturbed[0] if accepted[0] else None


def isotropic_perturb_batch(points: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    return points + rng.normal(0.0, sigma, size=points.shape)
