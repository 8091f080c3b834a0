"""Five-channel keypoint maps: StarMap + CanViewFeature (3) + DepthMap.

A keypoint is encoded as a unit Gaussian bump on the StarMap at its rounded
pixel, and its canonical coordinates and depth are written to the feature
channels on that pixel and its 8 neighbours.  Decoding reads the features
back at the 8-ring local maxima of the StarMap.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import OutOfBoundsKeypointError

PEAK_THRESHOLD = 0.05
DEFAULT_SIGMA = 1.0
CHANNELS = ("star", "canview_x", "canview_y", "canview_z", "depth")


@dataclass
class HybridMaps:
    star: np.ndarray  # (H, W) in [0, 1]
    canview: np.ndarray  # (3, H, W)
    depth: np.ndarray  # (H, W)

    def __post_init__(self):
        self.star = np.asarray(self.star, dtype=np.float64)
        self.canview = np.asarray(self.canview, dtype=np.float64)
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if self.star.ndim != 2:
            raise ValueError("star must be a 2-D grid")
        hw = self.star.shape
        if self.canview.shape != (3,) + hw or self.depth.shape != hw:
            raise ValueError(
                f"channel shapes disagree: star {hw}, canview {self.canview.shape}, depth {self.depth.shape}"
            )

    @property
    def height(self) -> int:
        return self.star.shape[0]

    @property
    def width(self) -> int:
        return self.star.shape[1]

    @classmethod
    def zeros(cls, height: int, width: int) -> "HybridMaps":
        return cls(np.zeros((height, width)), np.zeros((3, height, width)), np.zeros((height, width)))

    def stack(self) -> np.ndarray:
        """(5, H, W) array in :data:`CHANNELS` order."""
        return np.concatenate([self.star[None], self.canview, self.depth[None]], axis=0)

    @classmethod
    def from_stack(cls, arr) -> "HybridMaps":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != 5:
            raise ValueError(f"expected (5, H, W), got {arr.shape}")
        return cls(arr[0].copy(), arr[1:4].copy(), arr[4].copy())

    def copy(self) -> "HybridMaps":
        return HybridMaps(self.star.copy(), self.canview.copy(), self.depth.copy())


@dataclass(frozen=True)
class DetectedKeypoint:
    u: float
    v: float
    w: float
    canview: np.ndarray = field(repr=False)
    d: float = 0.0

    @property
    def uv(self) -> np.ndarray:
        return np.array([self.u, self.v])


def _pixels(keypoints, height, width):
    n = len(keypoints)
    rows = np.empty(n, dtype=np.int64)
    cols = np.empty(n, dtype=np.int64)
    for i, kp in enumerate(keypoints):
        u, v = float(kp[0]), float(kp[1])
        if not (0.0 <= u < width and 0.0 <= v < height):
            raise OutOfBoundsKeypointError(i, u, v, height, width)
        # round half up, clipped so u just below W stays on the grid
        cols[i] = min(int(np.floor(u + 0.5)), width - 1)
        rows[i] = min(int(np.floor(v + 0.5)), height - 1)
    return rows, cols


def feature_mask(keypoints, height: int, width: int) -> np.ndarray:
    """Binary mask of every encoded keypoint's pixel and its 8-ring."""
    rows, cols = _pixels(keypoints, height, width)
    mask = np.zeros((height, width))
    for r, c in zip(rows, cols):
        mask[max(r - 1, 0) : r + 2, max(c - 1, 0) : c + 2] = 1.0
    return mask


def encode_maps(keypoints: Sequence, height: int, width: int, sigma: float = DEFAULT_SIGMA) -> HybridMaps:
    """Render ``(u, v, canview_xyz, d)`` keypoints into :class:`HybridMaps`.

    Overlapping Gaussians combine by per-pixel max.  Where 8-ring footprints
    overlap the earlier keypoint keeps the pixel, but a keypoint's own centre
    pixel always carries its own features.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    maps = HybridMaps.zeros(height, width)
    if len(keypoints) == 0:
        return maps
    rows, cols = _pixels(keypoints, height, width)
    maps.star = kernels.render_star(rows, cols, height, width, float(sigma))

    owner = np.full((height, width), -1, dtype=np.int64)
    for i, (r, c) in enumerate(zip(rows, cols)):
        block = owner[max(r - 1, 0) : r + 2, max(c - 1, 0) : c + 2]
        block[block < 0] = i
    for i, (r, c) in enumerate(zip(rows, cols)):
        owner[r, c] = i

    feats = np.array([[*np.asarray(kp[2], dtype=np.float64), float(kp[3])] for kp in keypoints])
    hit = owner >= 0
    idx = owner[hit]
    maps.canview[:, hit] = feats[idx, :3].T
    maps.depth[hit] = feats[idx, 3]
    return maps


def _refine(grid, r, c):
    # parabola through the peak and its two neighbours along each axis
    def offset(lo, mid, hi):
        den = lo - 2.0 * mid + hi
        return 0.0 if den >= 0 else 0.5 * (lo - hi) / den

    h, w = grid.shape
    du = offset(grid[r, c - 1], grid[r, c], grid[r, c + 1]) if 0 < c < w - 1 else 0.0
    dv = offset(grid[r - 1, c], grid[r, c], grid[r + 1, c]) if 0 < r < h - 1 else 0.0
    return du, dv


def extract_peaks(
    maps: HybridMaps, threshold: float = PEAK_THRESHOLD, subpixel: bool = False
) -> list[DetectedKeypoint]:
    """StarMap 8-ring local maxima above ``threshold``, in row-major order.

    A peak is >= all in-grid neighbours and > at least one; on a plateau only
    the row-major-first pixel is reported.  Features are always read at the
    integer peak pixel; ``subpixel`` only refines the returned (u, v).
    """
    star = np.ascontiguousarray(maps.star)
    found = kernels.local_maxima(star, float(threshold))
    dets = []
    for r, c in found:
        u, v = float(c), float(r)
        if subpixel:
            du, dv = _refine(star, r, c)
            u, v = u + du, v + dv
        dets.append(
            DetectedKeypoint(
                u=u,
                v=v,
                w=float(star[r, c]),
                canview=maps.canview[:, r, c].copy(),
                d=float(maps.depth[r, c]),
            )
        )
    return dets


def masked_l2_loss(pred: HybridMaps, gt: HybridMaps, mask: Optional[np.ndarray] = None) -> float:
    """Sum of squared errors; feature channels only count where ``mask`` is set.

    The StarMap is compared everywhere.  ``mask=None`` means all ones.
    """
    if pred.star.shape != gt.star.shape:
        raise ValueError(f"grid size mismatch: {pred.star.shape} vs {gt.star.shape}")
    if mask is None:
        mask = np.ones_like(gt.star)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != gt.star.shape:
        raise ValueError(f"mask shape {mask.shape} does not match grid {gt.star.shape}")
    loss = np.sum((pred.star - gt.star) ** 2)
    loss += np.sum((mask * pred.canview - mask * gt.canview) ** 2)
    loss += np.sum((mask * pred.depth - mask * gt.depth) ** 2)
    return float(loss)
