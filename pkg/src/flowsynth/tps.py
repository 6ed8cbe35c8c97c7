"""Thin-plate-spline coordinate transforms.

A warp maps output-pixel coordinates to source sampling coordinates
(backward warping), so applying it to an image is a single bilinear
gather. Fitting solves the classic system with kernel U(r) = r^2 log r^2
(U(0) = 0) plus an affine part; the block structure enforces the usual
side conditions sum(w) = 0 and sum(w * source) = 0 per output dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, InvalidParameterError
from .imaging import DTYPE, make_identity_grid


@dataclass(frozen=True)
class ControlGrid:
    """Source lattice and displaced target positions of the control points."""

    grid_size: int
    source_points: np.ndarray  # (L*L, 2) float64, regular lattice over the image
    target_points: np.ndarray  # (L*L, 2) float64


@dataclass(frozen=True)
class TpsWarp:
    """A fitted spline: affine part (2x3) plus kernel weights (n x 2)."""

    control: ControlGrid
    affine_coeffs: np.ndarray   # (2, 3), rows are (c, cx, cy) per output dim
    kernel_weights: np.ndarray  # (n, 2)

    @property
    def is_affine(self) -> bool:
        return not np.any(self.kernel_weights)


def identity_warp(height: int, width: int, grid_size: int = 3) -> TpsWarp:
    """The exact identity transform (zero kernel weights, unit affine)."""
    control = _lattice(height, width, grid_size)
    control = ControlGrid(grid_size, control, control.copy())
    affine = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    return TpsWarp(control, affine, np.zeros((grid_size * grid_size, 2)))


def _lattice(height: int, width: int, grid_size: int) -> np.ndarray:
    xs = np.linspace(0.0, width - 1.0, grid_size)
    ys = np.linspace(0.0, height - 1.0, grid_size)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=-1)


def sample_control_grid(
    height: int,
    width: int,
    grid_size: int,
    noise_sigma: float,
    rng: np.random.Generator,
    distribution: str = "normal",
) -> ControlGrid:
    """Regular L x L lattice with i.i.d. per-coordinate displacement noise.

    `distribution` selects "normal" (N(0, sigma^2), the default) or
    "uniform" (matched to the same standard deviation).
    """
    if grid_size < 2:
        raise InvalidParameterError(f"grid_size must be >= 2, got {grid_size}")
    if noise_sigma < 0:
        raise InvalidParameterError("noise_sigma must be >= 0")
    source = _lattice(height, width, grid_size)
    if noise_sigma == 0:
        noise = np.zeros_like(source)
    elif distribution == "normal":
        noise = rng.normal(0.0, noise_sigma, size=source.shape)
    elif distribution == "uniform":
        half = noise_sigma * np.sqrt(3.0)
        noise = rng.uniform(-half, half, size=source.shape)
    else:
        raise InvalidParameterError(f"unknown noise distribution: {distribution}")
    return ControlGrid(grid_size, source, source + noise)


def _kernel(r2: np.ndarray) -> np.ndarray:
    out = np.log(r2, out=np.zeros_like(r2), where=r2 > 0)
    out *= r2
    return out


def fit_tps(control: ControlGrid, regularization: float = 1e-6) -> TpsWarp:
    """Solve for the spline mapping source control points to target points.

    `regularization` is relative to the kernel-block magnitude and is added
    to its diagonal; with 0 the spline interpolates the control points
    exactly.
    """
    if regularization < 0:
        raise InvalidParameterError("regularization must be >= 0")
    src = np.asarray(control.source_points, dtype=np.float64)
    tgt = np.asarray(control.target_points, dtype=np.float64)
    if src.shape != tgt.shape or src.ndim != 2 or src.shape[1] != 2:
        raise InvalidParameterError("malformed control grid")
    if np.array_equal(src, tgt):
        # Exact interpolation of identity data is the identity spline.
        affine = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        return TpsWarp(control, affine, np.zeros_like(src))
    n = src.shape[0]
    d2 = np.sum((src[:, None, :] - src[None, :, :]) ** 2, axis=-1)
    K = _kernel(d2)
    scale = np.mean(np.abs(K)) or 1.0
    P = np.concatenate([np.ones((n, 1)), src], axis=1)
    A = np.zeros((n + 3, n + 3))
    A[:n, :n] = K + regularization * scale * np.eye(n)
    A[:n, n:] = P
    A[n:, :n] = P.T
    rhs = np.zeros((n + 3, 2))
    rhs[:n] = tgt
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateGeometryError(f"singular TPS system: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise DegenerateGeometryError("non-finite TPS solution")
    return TpsWarp(control, sol[n:].T.copy(), sol[:n].copy())


def evaluate_warp(warp: TpsWarp, grid: np.ndarray) -> np.ndarray:
    """Apply the warp to every (x, y) of `grid` (any leading shape)."""
    grid = np.asarray(grid)
    pts = grid.reshape(-1, 2).astype(np.float64)
    a = warp.affine_coeffs
    out = a[:, 0][None, :] + pts[:, 0:1] * a[:, 1][None, :] + pts[:, 1:2] * a[:, 2][None, :]
    if not warp.is_affine:
        src = np.asarray(warp.control.source_points, dtype=np.float64)
        # per-axis accumulation avoids a (P, n, 2) temporary on dense grids
        diff = pts[:, 0:1] - src[None, :, 0]
        d2 = diff * diff
        diff = pts[:, 1:2] - src[None, :, 1]
        d2 += diff * diff
        out += _kernel(d2) @ warp.kernel_weights
    return out.reshape(grid.shape).astype(grid.dtype if grid.dtype.kind == "f" else np.float64)


def displacement_field(
    warp: TpsWarp, height: int, width: int, shift: tuple[float, float] = (0.0, 0.0)
) -> np.ndarray:
    """Per-pixel flow vectors warp(x) - x + shift as a float32 (H, W, 2) field."""
    grid = make_identity_grid(height, width)
    warped = evaluate_warp(warp, grid.astype(np.float64))
    shift_arr = np.asarray(shift, dtype=np.float64)
    return (warped - grid + shift_arr).astype(DTYPE)


def dense_coords(
    warp: TpsWarp,
    height: int,
    width: int,
    stride: int = 1,
    window: tuple[int, int, int, int] | None = None,
) -> np.ndarray:
    """Warped sampling coordinates for every pixel (or a window of them).

    With stride 1 this is the exact spline at every pixel. With stride > 1
    the spline is evaluated on a coarse lattice and refined bilinearly; the
    result is a smooth warp that deviates from the exact spline by a
    negligible amount, and generated flow stays exactly consistent with the
    images as long as both are produced from the same returned grid.
    `window` = (y0, y1, x0, x1) restricts the output to that pixel slab.
    """
    if stride < 1:
        raise InvalidParameterError("stride must be >= 1")
    if window is None:
        window = (0, height, 0, width)
    y0, y1, x0, x1 = window
    if stride == 1:
        gx, gy = np.meshgrid(
            np.arange(x0, x1, dtype=np.float64), np.arange(y0, y1, dtype=np.float64)
        )
        grid = np.stack([gx, gy], axis=-1)
        return evaluate_warp(warp, grid).astype(DTYPE)

    # Lattice anchored at multiples of `stride` so that the refinement
    # weights are exact dyadic fractions (stride is a power of two in the
    # default configuration); a linear spline is then reproduced exactly.
    ix0, ix1 = x0 // stride, (x1 - 1) // stride + 1
    iy0, iy1 = y0 // stride, (y1 - 1) // stride + 1
    lx = np.arange(ix0, ix1 + 1, dtype=np.float64) * stride
    ly = np.arange(iy0, iy1 + 1, dtype=np.float64) * stride
    gx, gy = np.meshgrid(lx, ly)
    lat = evaluate_warp(warp, np.stack([gx, gy], axis=-1)).astype(DTYPE)  # (ny, nx, 2)

    xs = np.arange(x0, x1)
    ys = np.arange(y0, y1)
    jx = xs // stride - ix0
    jy = ys // stride - iy0
    tx = ((xs % stride) / stride)[None, :, None].astype(DTYPE)
    ty = ((ys % stride) / stride)[:, None, None].astype(DTYPE)
    a = lat[:, jx]
    b = lat[:, jx + 1]
    row = a + (b - a) * tx                    # (ny, W', 2)
    c = row[jy]
    d = row[jy + 1]
    out = c + (d - c) * ty
    return out if out.dtype == DTYPE else out.astype(DTYPE)


def support_window(
    warp: TpsWarp,
    height: int,
    width: int,
    target: tuple[int, int, int, int],
    stride: int = 32,
) -> tuple[int, int, int, int] | None:
    """Pixel window whose warped coordinates can land inside `target`.

    `target` and the returned window are (y0, y1, x0, x1). The bound comes
    from a coarse lattice with one cell of slack on both sides (the same
    smoothness argument as max_displacement). Returns None when no pixel
    can reach the target.
    """
    xs = np.arange(0, width + stride, stride, dtype=np.float64)
    ys = np.arange(0, height + stride, stride, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    warped = evaluate_warp(warp, np.stack([gx, gy], axis=-1))
    ty0, ty1, tx0, tx1 = target
    slack = stride + 2  # one lattice cell plus the bilinear footprint
    hit = (
        (warped[..., 0] >= tx0 - slack) & (warped[..., 0] < tx1 + slack)
        & (warped[..., 1] >= ty0 - slack) & (warped[..., 1] < ty1 + slack)
    )
    if not hit.any():
        return None
    iy = np.flatnonzero(hit.any(axis=1))
    ix = np.flatnonzero(hit.any(axis=0))
    y0 = max(0, int(ys[iy[0]]) - stride)
    y1 = min(height, int(ys[iy[-1]]) + stride + 1)
    x0 = max(0, int(xs[ix[0]]) - stride)
    x1 = min(width, int(xs[ix[-1]]) + stride + 1)
    if y0 >= y1 or x0 >= x1:
        return None
    return y0, y1, x0, x1


def max_displacement(warp: TpsWarp, height: int, width: int, stride: int = 32) -> float:
    """Upper estimate of |warp(x) - x| over the image, from a coarse lattice."""
    xs = np.arange(0, width + stride, stride, dtype=np.float64)
    ys = np.arange(0, height + stride, stride, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    grid = np.stack([gx, gy], axis=-1)
    warped = evaluate_warp(warp, grid)
    # the spline is smooth; one lattice cell of slack covers what the
    # coarse sampling can miss between lattice points
    return float(np.abs(warped - grid).max()) + stride
