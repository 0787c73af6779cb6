"""Decode dense maps back into bounding boxes.

The decode runs four stages: mask the regression grid with the
segmentation grid, drop tiny connected patches, find per-channel local
maxima with a maximum filter (channel 0 maxima are top-left corner
candidates, channel 1 maxima bottom-right), then combine corner pairs into
boxes and keep those whose enclosed area is at least a ``delta`` fraction
segmented.

Every stage is a pure function; `box_generator` is their composition and is
deterministic for fixed input and config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .densemaps import DenseMaps
from .geometry import BBox, PixelCoord

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass
class BoxGeneratorConfig:
    """Decode knobs.

    delta is the minimum segmented fraction a candidate box must enclose.
    A true corner carries a regression value of exactly 1, so peak_floor
    rejects mid-box plateaus without touching real corners. max_box_diag
    of None means "half the grid diagonal", resolved per call.

    The window must stay small enough that same-channel corners of
    distinct boxes never share a window: half the window below
    min box side + gap keeps clean decodes exact. It must also be large
    enough that regression noise cannot raise a duplicate peak outside the
    true corner's window; 13 holds both for boxes >= 8 px with >= 3 px
    gaps under 0.05-amplitude noise.
    """

    delta: float = 0.9
    max_filter_window: int = 13
    min_patch_area: int = 9
    max_box_diag: float | None = None
    peak_floor: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must be in (0, 1], got {self.delta}")
        if self.max_filter_window < 3 or self.max_filter_window % 2 == 0:
            raise ValueError(f"max_filter_window must be odd and >= 3, got {self.max_filter_window}")
        if self.min_patch_area < 1:
            raise ValueError(f"min_patch_area must be >= 1, got {self.min_patch_area}")

    def resolved_diag(self, grid: tuple[int, int]) -> float:
        if self.max_box_diag is not None:
            return self.max_box_diag
        return math.hypot(grid[0], grid[1]) / 2.0


@dataclass
class CornerCandidates:
    """Peak locations: p1 top-left candidates, p2 bottom-right candidates."""

    p1: list[PixelCoord]
    p2: list[PixelCoord]


def mask_maps(maps: DenseMaps) -> np.ndarray:
    """Elementwise product S * R per channel; zero outside segmentation."""
    return maps.reg * maps.seg[None, :, :]


def remove_noise(masked: np.ndarray, min_patch_area: int) -> np.ndarray:
    """Zero 8-connected support patches smaller than min_patch_area.

    Support is the set of pixels where either channel is nonzero; both
    channels of a removed patch are cleared.
    """
    support = (masked[0] > 0) | (masked[1] > 0)
    labels, count = ndimage.label(support, structure=_EIGHT_CONNECTED)
    if count == 0:
        return masked.copy()
    areas = np.bincount(labels.ravel(), minlength=count + 1)
    tiny = areas < min_patch_area
    tiny[0] = False
    out = masked.copy()
    out[:, tiny[labels]] = 0.0
    return out


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        self.parent[self.find(j)] = self.find(i)


def _channel_peaks(values: np.ndarray, window: int, floor: float) -> list[PixelCoord]:
    """Window-maximum pixels above the floor, one per tied plateau.

    Candidates carrying the same value inside each other's window both
    equal the shared window maximum, so they are one plateau; plateaus are
    grouped transitively (8-connected flats first, then equal-valued
    groups whose pixels come within half a window of each other) and each
    group keeps its lexicographically smallest (i_y, i_x) pixel. Equal
    peaks farther apart, such as corners of distinct boxes, stay separate.
    """
    local_max = ndimage.maximum_filter(values, size=window, mode="constant", cval=0.0)
    cand = (values == local_max) & (values > floor)
    if not cand.any():
        return []
    labels, _ = ndimage.label(cand, structure=_EIGHT_CONNECTED)
    ys, xs = np.nonzero(cand)  # row-major: lexicographic (i_y, i_x) order
    comp = labels[ys, xs]
    comp_ids, first, comp_index = np.unique(comp, return_index=True, return_inverse=True)

    half = window // 2
    uf = _UnionFind(len(comp_ids))
    by_value: dict[float, list[int]] = {}
    for i in range(len(ys)):
        by_value.setdefault(float(values[ys[i], xs[i]]), []).append(i)
    for members in by_value.values():
        if len({int(comp_index[m]) for m in members}) == 1:
            continue
        my = ys[members]
        mx = xs[members]
        close = (np.abs(my[:, None] - my[None, :]) <= half) & (
            np.abs(mx[:, None] - mx[None, :]) <= half
        )
        for a, b in zip(*np.nonzero(close)):
            uf.union(int(comp_index[members[a]]), int(comp_index[members[b]]))

    best: dict[int, int] = {}
    for k, f in enumerate(first):
        root = uf.find(k)
        if root not in best or f < best[root]:
            best[root] = int(f)
    peaks = [(int(xs[i]), int(ys[i])) for i in best.values()]
    peaks.sort(key=lambda p: (p[1], p[0]))
    return peaks


def find_peaks(masked: np.ndarray, cfg: BoxGeneratorConfig) -> CornerCandidates:
    """Per-channel local maxima of the masked regression grid.

    Masking guarantees any pixel above the (nonnegative) floor lies on
    segmented support.
    """
    return CornerCandidates(
        p1=_channel_peaks(masked[0], cfg.max_filter_window, cfg.peak_floor),
        p2=_channel_peaks(masked[1], cfg.max_filter_window, cfg.peak_floor),
    )


def generate_boxes(
    candidates: CornerCandidates, seg: np.ndarray, cfg: BoxGeneratorConfig
) -> list[BBox]:
    """Combine corner candidates and keep delta-segmented boxes.

    A pair (a, b) forms a candidate only when b lies strictly right of and
    below a by at least the 2 px minimum box side, with diagonal at most
    max_box_diag. The kept set is deduplicated and sorted by
    (y0, x0, y1, x1).
    """
    height, width = seg.shape
    max_diag = cfg.resolved_diag((width, height))
    # Summed-area table: occupied(y1, x1) - ... gives segmented pixel counts.
    integral = np.zeros((height + 1, width + 1), dtype=np.int64)
    integral[1:, 1:] = np.cumsum(np.cumsum(seg > 0, axis=0), axis=1)

    kept: set[tuple[int, int, int, int]] = set()
    for ax, ay in candidates.p1:
        for bx, by in candidates.p2:
            if bx - ax < 2 or by - ay < 2:
                continue
            if math.hypot(bx - ax, by - ay) > max_diag:
                continue
            total = (bx - ax + 1) * (by - ay + 1)
            occupied = int(
                integral[by + 1, bx + 1]
                - integral[ay, bx + 1]
                - integral[by + 1, ax]
                + integral[ay, ax]
            )
            if occupied / total >= cfg.delta:
                kept.add((ax, ay, bx, by))
    return [BBox(*t) for t in sorted(kept, key=lambda t: (t[1], t[0], t[3], t[2]))]


def box_generator(maps: DenseMaps, cfg: BoxGeneratorConfig | None = None) -> list[BBox]:
    """Full decode: mask, denoise, peak-find, combine, filter."""
    cfg = cfg or BoxGeneratorConfig()
    masked = mask_maps(maps)
    masked = remove_noise(masked, cfg.min_patch_area)
    candidates = find_peaks(masked, cfg)
    return generate_boxes(candidates, maps.seg, cfg)
