"""Raster primitives: coordinate grids, bilinear resampling, compositing.

Conventions used throughout the package:

* images are float32 arrays of shape (H, W, C) with C in {1, 3} and
  intensities in [0, 1],
* masks are float32 arrays of shape (H, W) with values in [0, 1],
* coordinate grids and flow fields are float32 arrays of shape (H, W, 2)
  storing (x, y) respectively (u, v), with x = column, y = row and the
  origin at the top-left pixel center.
"""

from __future__ import annotations

import cv2
import numpy as np

from .errors import InvalidDimensionError

DTYPE = np.float32

BORDER_CLAMP = "clamp"
BORDER_ZERO = "zero"

_CV_BORDER = {
    BORDER_CLAMP: cv2.BORDER_REPLICATE,
    BORDER_ZERO: cv2.BORDER_CONSTANT,
}


def as_image(arr) -> np.ndarray:
    """Coerce an array to the canonical float32 (H, W, C) image layout."""
    a = np.asarray(arr, dtype=DTYPE)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[2] not in (1, 3):
        raise InvalidDimensionError(f"not an image shape: {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidDimensionError(f"empty image: {a.shape}")
    return a


def make_identity_grid(height: int, width: int) -> np.ndarray:
    """Grid g with g[y, x] = (x, y) for every pixel."""
    if height < 1 or width < 1:
        raise InvalidDimensionError(f"invalid grid size {height}x{width}")
    gx, gy = np.meshgrid(
        np.arange(width, dtype=DTYPE), np.arange(height, dtype=DTYPE)
    )
    return np.stack([gx, gy], axis=-1)


def bilinear_sample(src, grid, border: str = BORDER_CLAMP) -> np.ndarray:
    """Sample `src` at the (x, y) locations of `grid`.

    Out-of-bounds coordinates are handled per `border` ("clamp" replicates
    the edge, "zero" reads 0). Output dimensions follow the grid. Values
    are convex combinations of source pixels, so they stay inside the
    source range and need no extra clamping.
    """
    src = as_image(src)
    if border not in _CV_BORDER:
        raise ValueError(f"unknown border policy: {border}")
    grid = np.asarray(grid, dtype=DTYPE)
    mapx = np.ascontiguousarray(grid[..., 0])
    mapy = np.ascontiguousarray(grid[..., 1])
    squeeze = src.shape[2] == 1
    data = src[:, :, 0] if squeeze else src
    out = cv2.remap(
        data, mapx, mapy, cv2.INTER_LINEAR,
        borderMode=_CV_BORDER[border], borderValue=0.0,
    )
    return out[:, :, None] if squeeze else out


def sample_mask(src, grid) -> np.ndarray:
    """Resample a soft matte; coordinates outside the mask read as 0."""
    src = np.asarray(src, dtype=DTYPE)
    if src.ndim != 2 or src.size == 0:
        raise InvalidDimensionError(f"not a mask shape: {src.shape}")
    return bilinear_sample(src[:, :, None], grid, border=BORDER_ZERO)[:, :, 0]


def alpha_composite(fg, matte, bg) -> np.ndarray:
    """Per-pixel convex blend: matte * fg + (1 - matte) * bg."""
    fg = as_image(fg)
    bg = as_image(bg)
    matte = np.asarray(matte, dtype=DTYPE)
    if fg.shape != bg.shape or matte.shape != fg.shape[:2]:
        raise InvalidDimensionError(
            f"composite shape mismatch: fg {fg.shape} matte {matte.shape} bg {bg.shape}"
        )
    m = matte[:, :, None]
    return m * fg + (1.0 - m) * bg


def shift_raster(arr, offset: tuple[int, int]) -> np.ndarray:
    """Translate a raster by integer (dx, dy) pixels, zero-filling.

    Returns out with out[y, x] = arr[y - dy, x - dx] where defined.
    """
    arr = np.asarray(arr)
    dx, dy = int(offset[0]), int(offset[1])
    h, w = arr.shape[:2]
    out = np.zeros_like(arr)
    if abs(dx) >= w or abs(dy) >= h:
        return out
    sy0, sy1 = max(0, -dy), min(h, h - dy)
    sx0, sx1 = max(0, -dx), min(w, w - dx)
    out[sy0 + dy:sy1 + dy, sx0 + dx:sx1 + dx] = arr[sy0:sy1, sx0:sx1]
    return out


def binary_view(mask, threshold: float = 0.5) -> np.ndarray:
    """Boolean view of a soft matte thresholded at `threshold`."""
    return np.asarray(mask) >= threshold
