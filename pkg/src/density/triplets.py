"""Inter- vs intra-class patch distance ratios over a labelled corpus.

Each triplet is an anchor patch A centred on a pixel whose 4-neighbour has
a different label, the negative N centred on that neighbour, and the best
positive P: the patch of the anchor's class, in any other image, closest to
A. The ratio |N − A|² / |P − A|² below 1 means the neighbouring patch of the
other class is closer than anything of the same class found elsewhere.
"""

from dataclasses import dataclass, field

import numpy as np

from src.density.corpus import LabeledImage
from src.errors import DataError
from src.logging.runlog import get_run_logger
from src.tensor.ops import box_filter, conv2d

logger = get_run_logger("density.triplets")

DEFAULT_TRIPLETS = 1000
STRIDE_THRESHOLD = 128  # images larger than this are searched on a stride-2 grid
_ANCHOR_CHUNK = 256
_DIRECTIONS = ((0, 1), (1, 0), (0, -1), (-1, 0))


@dataclass
class Triplet:
    image: int
    anchor: tuple[int, int]  # patch top-left
    negative: tuple[int, int]
    positive_image: int
    positive: tuple[int, int]
    d_inter: float
    d_intra: float


@dataclass
class TripletReport:
    ratios: np.ndarray
    histogram: np.ndarray
    bin_edges: np.ndarray
    median: float
    stride: int
    excluded_zero: int  # triplets dropped because the best positive was an exact copy
    triplets: list[Triplet] = field(default_factory=list, repr=False)


def _candidate_anchors(item: LabeledImage, patch: int) -> list[tuple[int, int, int, int]]:
    """(row, col, dy, dx) of patch corners whose centre pixel has a differently labelled 4-neighbour."""
    h, w = item.labels.shape
    half = patch // 2
    rows, cols = h - patch + 1, w - patch + 1
    found = []
    centre = item.labels[half:half + rows, half:half + cols]
    for dy, dx in _DIRECTIONS:
        # neighbour patch corner must also fit
        r0, r1 = max(0, -dy), rows - max(0, dy)
        c0, c1 = max(0, -dx), cols - max(0, dx)
        here = centre[r0:r1, c0:c1]
        there = centre[r0 + dy:r1 + dy, c0 + dx:c1 + dx]
        for r, c in zip(*np.nonzero(here != there)):
            found.append((int(r + r0), int(c + c0), dy, dx))
    return found


def _patch(item: LabeledImage, r: int, c: int, patch: int) -> np.ndarray:
    return item.image[:, r:r + patch, c:c + patch]


def _positions_ssd(item: LabeledImage, kernels: np.ndarray, patch: int, stride: int) -> np.ndarray:
    """‖P(q) − A_k‖² for every anchor kernel k and every (strided) position q."""
    energy = box_filter((item.image ** 2).sum(axis=0), patch, patch)[::stride, ::stride]
    corr = conv2d(item.image, kernels, stride=stride, pad=0)
    norms = (kernels ** 2).sum(axis=(1, 2, 3))
    return np.maximum(energy[None] - 2.0 * corr + norms[:, None, None], 0.0)


def triplet_ratio_analysis(
    corpus: list[LabeledImage],
    patch: int,
    n: int,
    rng: np.random.Generator,
    stride: int | None = None,
    bins: int = 40,
) -> TripletReport:
    """Ratios d_inter / d_intra for n sampled anchors (with replacement when fewer exist)."""
    if len(corpus) < 2:
        raise DataError("triplet analysis needs at least two images")
    if n < 1:
        raise DataError(f"triplet count must be positive, got {n}")
    for item in corpus:
        if min(item.labels.shape) < patch + 1:
            raise DataError(f"patch {patch} does not fit image {item.labels.shape}")
    if stride is None:
        stride = 2 if max(max(it.labels.shape) for it in corpus) > STRIDE_THRESHOLD else 1

    candidates = [(i, *a) for i, item in enumerate(corpus) for a in _candidate_anchors(item, patch)]
    if not candidates:
        raise DataError("no cross-class neighbour pairs in the corpus")
    picks = rng.choice(len(candidates), size=n, replace=len(candidates) < n)
    chosen = [candidates[k] for k in picks]

    half = patch // 2
    best = np.full(n, np.inf)
    best_at: list[tuple[int, int, int]] = [(-1, -1, -1)] * n
    anchors = np.stack([_patch(corpus[i], r, c, patch) for i, r, c, _, _ in chosen])
    anchor_labels = np.array([corpus[i].labels[r + half, c + half] for i, r, c, _, _ in chosen])
    anchor_images = np.array([i for i, *_ in chosen])

    for j, item in enumerate(corpus):
        centre = item.labels[half:half + item.labels.shape[0] - patch + 1:stride,
                             half:half + item.labels.shape[1] - patch + 1:stride]
        for start in range(0, n, _ANCHOR_CHUNK):
            sl = slice(start, min(start + _ANCHOR_CHUNK, n))
            ssd = _positions_ssd(item, anchors[sl], patch, stride)
            same_class = centre[None] == anchor_labels[sl, None, None]
            ssd = np.where(same_class, ssd, np.inf)
            ssd[anchor_images[sl] == j] = np.inf
            flat = ssd.reshape(ssd.shape[0], -1)
            arg = flat.argmin(axis=1)
            val = flat[np.arange(flat.shape[0]), arg]
            for k, (v, a) in enumerate(zip(val, arg), start=start):
                if v < best[k]:
                    best[k] = v
                    qr, qc = divmod(int(a), ssd.shape[2])
                    best_at[k] = (j, qr * stride, qc * stride)

    ratios, triplets, excluded, no_positive = [], [], 0, 0
    for k, (i, r, c, dy, dx) in enumerate(chosen):
        a = anchors[k]
        d_inter = float(((_patch(corpus[i], r + dy, c + dx, patch) - a) ** 2).sum())
        d_intra = float(best[k])
        if not np.isfinite(d_intra):
            no_positive += 1
            continue
        if d_intra <= 1e-9 * max(1.0, float((a ** 2).sum())):
            excluded += 1
            continue
        ratios.append(d_inter / d_intra)
        j, pr, pc = best_at[k]
        triplets.append(Triplet(i, (r, c), (r + dy, c + dx), j, (pr, pc), d_inter, d_intra))

    if not ratios:
        raise DataError("no usable triplets (every positive was missing or an exact duplicate)")
    ratio_arr = np.array(ratios)
    hist, edges = np.histogram(ratio_arr, bins=bins)
    logger.info("triplet analysis", extra={"run_data": {
        "triplets": len(ratios), "excluded_zero": excluded, "no_positive": no_positive,
        "stride": stride, "median_ratio": float(np.median(ratio_arr))}})
    return TripletReport(ratio_arr, hist, edges, float(np.median(ratio_arr)), stride, excluded, triplets)
