"""Gaussian pseudo-attention crops for per-detection features.

Each detection's box is expanded to an M x M square window,
M = ceil(expand_ratio * max(width, height)), centered on the box center.
The attention map over that window is exactly 1 on the original box and an
unnormalized Gaussian of the center offset elsewhere:

    A(ix, iy) = exp(-1/2 * ((ix - cx)^2 / (s*W)^2 + (iy - cy)^2 / (s*H)^2))

with s the sigma_scale knob. The window is always square, so resizing it to
the fixed output side uses equal scale factors on both axes and the crop
never distorts the box's aspect ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import BBox, center


@dataclass
class AttentionConfig:
    expand_ratio: float = 1.5
    sigma_scale: float = 0.5
    out_size: int = 16

    def __post_init__(self) -> None:
        if self.expand_ratio < 1.0:
            raise ValueError(f"expand_ratio must be >= 1, got {self.expand_ratio}")
        if self.sigma_scale <= 0.0:
            raise ValueError(f"sigma_scale must be positive, got {self.sigma_scale}")
        if self.out_size < 4:
            raise ValueError(f"out_size must be >= 4, got {self.out_size}")


@dataclass(frozen=True)
class CropWindow:
    """Square pixel window; may extend past the frame bounds."""

    x0: int
    y0: int
    size: int

    @property
    def x1(self) -> int:
        return self.x0 + self.size - 1

    @property
    def y1(self) -> int:
        return self.y0 + self.size - 1


@dataclass
class AttentionMap:
    """Attention values over an expanded window, plus the box placement.

    ``values[wy, wx]`` weights window pixel (x0 + wx, y0 + wy);
    ``box_window`` is the original box in window-local coordinates.
    """

    values: np.ndarray
    window: CropWindow
    box_window: tuple[int, int, int, int]


@dataclass
class CropFeature:
    """Fixed-size per-detection tensor: D feature channels + 1 attention."""

    tensor: np.ndarray
    source_box: BBox
    frame_index: int = -1


def expanded_window(b: BBox, cfg: AttentionConfig) -> CropWindow:
    """M x M square window centered on the box center (round-half-up)."""
    m = math.ceil(cfg.expand_ratio * max(b.width, b.height))
    cx, cy = center(b)
    x0 = math.floor(cx - (m - 1) / 2.0 + 0.5)
    y0 = math.floor(cy - (m - 1) / 2.0 + 0.5)
    return CropWindow(x0, y0, m)


def attention_map(b: BBox, cfg: AttentionConfig) -> AttentionMap:
    """Exact-interior Gaussian attention over the expanded window.

    In-box pixels are set to 1 directly (no exponential evaluated there);
    outside values follow the diagonal-covariance Gaussian with axis sigmas
    sigma_scale * width and sigma_scale * height.
    """
    win = expanded_window(b, cfg)
    cx, cy = center(b)
    sx = cfg.sigma_scale * b.width
    sy = cfg.sigma_scale * b.height
    xs = np.arange(win.x0, win.x0 + win.size, dtype=np.float64)
    ys = np.arange(win.y0, win.y0 + win.size, dtype=np.float64)
    q = ((xs - cx) / sx)[None, :] ** 2 + ((ys - cy) / sy)[:, None] ** 2
    values = np.exp(-0.5 * q)
    inside = (
        ((xs >= b.x0) & (xs <= b.x1))[None, :]
        & ((ys >= b.y0) & (ys <= b.y1))[:, None]
    )
    values[inside] = 1.0
    return AttentionMap(
        values=values,
        window=win,
        box_window=(b.x0 - win.x0, b.y0 - win.y0, b.x1 - win.x0, b.y1 - win.y0),
    )


def _extract_window(features: np.ndarray, win: CropWindow) -> np.ndarray:
    """Copy the window from a (C, H, W) grid, zero-filling beyond the frame."""
    channels, height, width = features.shape
    out = np.zeros((channels, win.size, win.size), dtype=np.float64)
    x_lo, x_hi = max(win.x0, 0), min(win.x0 + win.size, width)
    y_lo, y_hi = max(win.y0, 0), min(win.y0 + win.size, height)
    if x_lo < x_hi and y_lo < y_hi:
        out[:, y_lo - win.y0 : y_hi - win.y0, x_lo - win.x0 : x_hi - win.x0] = features[
            :, y_lo:y_hi, x_lo:x_hi
        ]
    return out


def _resize_square(stack: np.ndarray, out_size: int) -> np.ndarray:
    """Bilinear (C, M, M) -> (C, out, out) with half-pixel-center sampling."""
    m = stack.shape[-1]
    if m == out_size:
        return stack.copy()
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * (m / out_size) - 0.5
    src = np.clip(src, 0.0, m - 1.0)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, m - 1)
    frac = src - lo
    rows = stack[:, lo, :] * (1.0 - frac)[None, :, None] + stack[:, hi, :] * frac[None, :, None]
    return rows[:, :, lo] * (1.0 - frac)[None, None, :] + rows[:, :, hi] * frac[None, None, :]


def crop_and_resize(
    features: np.ndarray, b: BBox, cfg: AttentionConfig, frame_index: int = -1
) -> CropFeature:
    """Expanded-window crop of the feature grid with its attention channel.

    The window is cut from the (D, H, W) grid with zero fill outside the
    frame, resized square-to-square to out_size, and the equally resized
    attention map is appended as channel D + 1.
    """
    attn = attention_map(b, cfg)
    window = _extract_window(np.asarray(features, dtype=np.float64), attn.window)
    stack = np.concatenate([window, attn.values[None, :, :]], axis=0)
    resized = _resize_square(stack, cfg.out_size)
    return CropFeature(tensor=resized, source_box=b, frame_index=frame_index)


def write_pgm(path: str, values: np.ndarray) -> None:
    """Dump a unit-interval grid as a binary portable graymap for inspection."""
    levels = np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0), 0, 255)
    data = levels.astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
