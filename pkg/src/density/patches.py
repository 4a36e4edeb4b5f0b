"""Neighbour-patch L² distances through the box-filter identity.

For a patch P(p) of size h×w with top-left corner p, the distance to the
patch one pixel to the right is

    ‖P(p + e_x) − P(p)‖₂ = √(box_filter((Δ_x x)², h, w))[p]

with the forward difference Δ_x x[i, j] = x[i, j+1] − x[i, j]. The same holds
for Δ_y and for the two diagonals. Output position (r, c) of
neighbor_distance_map is the patch whose top-left corner is (r + 1, c + 1),
i.e. the patch centred on pixel (r + 1 + h//2, c + 1 + w//2); the one-pixel
margin keeps every neighbour patch inside the image.
"""

from typing import Literal

import numpy as np

from src.errors import ShapeError
from src.tensor.ops import box_filter

Neighbourhood = Literal[4, 8]


def _as_chw(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img[None]
    if img.ndim != 3:
        raise ShapeError(f"expected H×W or C×H×W image, got {img.shape}")
    return img


def shift_distance(img: np.ndarray, dy: int, dx: int, patch_h: int, patch_w: int) -> np.ndarray:
    """‖P(q + (dy, dx)) − P(q)‖₂ for every q where both patches fit (dy ≥ 0 and |dx| ≤ 1).

    Rows index q's row; columns index q's column offset by max(0, −dx).
    """
    x = _as_chw(img)
    h, w = x.shape[1:]
    lo = max(0, -dx)
    a = x[:, : h - dy, lo: w - max(0, dx)]
    b = x[:, dy:, lo + dx: w - max(0, dx) + dx]
    sq = ((b - a) ** 2).sum(axis=0)  # channels summed before filtering
    return np.sqrt(np.maximum(box_filter(sq, patch_h, patch_w), 0.0))


def neighbor_distance_map(
    img: np.ndarray, patch_h: int, patch_w: int, neighbors: Neighbourhood = 4
) -> np.ndarray:
    """Average L² distance from each patch to its 4 (or 8) one-pixel-shifted neighbours.

    Output is (H − patch_h − 1) × (W − patch_w − 1).
    """
    x = _as_chw(img)
    h, w = x.shape[1:]
    if patch_h < 1 or patch_w < 1 or patch_h > h - 2 or patch_w > w - 2:
        raise ShapeError(f"patch {patch_h}×{patch_w} too large for a {h}×{w} image with its neighbours")
    if neighbors not in (4, 8):
        raise ShapeError(f"neighbourhood must be 4 or 8, got {neighbors}")
    oh, ow = h - patch_h - 1, w - patch_w - 1

    horiz = shift_distance(x, 0, 1, patch_h, patch_w)  # (H−ph+1)×(W−pw)
    vert = shift_distance(x, 1, 0, patch_h, patch_w)  # (H−ph)×(W−pw+1)
    total = (
        horiz[1:1 + oh, 1:1 + ow]  # right
        + horiz[1:1 + oh, 0:ow]  # left
        + vert[1:1 + oh, 1:1 + ow]  # down
        + vert[0:oh, 1:1 + ow]  # up
    )
    if neighbors == 4:
        return total / 4.0

    diag = shift_distance(x, 1, 1, patch_h, patch_w)  # q → q + (1, 1)
    anti = shift_distance(x, 1, -1, patch_h, patch_w)  # q → q + (1, −1), columns offset by 1
    total = total + (
        diag[1:1 + oh, 1:1 + ow]  # down-right
        + diag[0:oh, 0:ow]  # up-left
        + anti[1:1 + oh, 0:ow]  # down-left
        + anti[0:oh, 1:1 + ow]  # up-right
    )
    return total / 8.0


def label_boundaries(labels: np.ndarray) -> np.ndarray:
    """Pixels with a 4-neighbour of a different class."""
    edge = np.zeros(labels.shape, dtype=bool)
    dx = labels[:, 1:] != labels[:, :-1]
    dy = labels[1:, :] != labels[:-1, :]
    edge[:, 1:] |= dx
    edge[:, :-1] |= dx
    edge[1:, :] |= dy
    edge[:-1, :] |= dy
    return edge


def render_distance_map(
    dmap: np.ndarray, patch_h: int, patch_w: int, labels: np.ndarray | None = None
) -> np.ndarray:
    """Normalised grey render placed at patch centres, optional label boundaries in white.

    Returns an array the size of the source image; the border the map does
    not cover is black.
    """
    oy, ox = 1 + patch_h // 2, 1 + patch_w // 2
    if labels is not None:
        h, w = labels.shape
    else:
        h, w = dmap.shape[0] + patch_h + 1, dmap.shape[1] + patch_w + 1
    out = np.zeros((h, w))
    peak = dmap.max()
    out[oy:oy + dmap.shape[0], ox:ox + dmap.shape[1]] = dmap / peak if peak > 0 else 0.0
    if labels is not None:
        out[label_boundaries(labels)] = 1.0
    return out
