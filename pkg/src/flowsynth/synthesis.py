"""Scene synthesis: inpainting, background/foreground warping, compositing.

A generated sample is a pair of frames plus the exact forward flow
(frame0 -> frame1), an occlusion mask, and a shadow-region mask. The
background is the source image (holes filled from an auxiliary image)
warped twice by thin-plate splines; each occluder layer is a grown
superpixel group cut from the undistorted source, warped twice by its own
splines, globally shifted, and composited in depth order. Shadow layers
darken the frames but inherit the background flow.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import (
    DegenerateLayerError,
    InvalidDimensionError,
    InvalidParameterError,
)
from .imaging import (
    DTYPE,
    alpha_composite,
    as_image,
    bilinear_sample,
    make_identity_grid,
    sample_mask,
)
from .segmentation import SegmentationStack, grow_region
from .tps import (
    ControlGrid,
    TpsWarp,
    dense_coords,
    fit_tps,
    sample_control_grid,
    support_window,
)

# mattes strictly inside (MIX_LO, MIX_HI) are blend pixels without an exact
# single correspondence; they are folded into the occlusion mask
MIX_LO = 1.0 / 255.0
MIX_HI = 1.0 - 1.0 / 255.0

OPAQUE = "opaque"
SHADOW = "shadow"


@dataclass(frozen=True)
class SynthesisConfig:
    """Sampling ranges for one generated scene (defaults follow the
    reference configuration this generator ships with)."""

    n_layers_range: tuple[int, int] = (8, 14)
    occluder_size_range: tuple[int, int] = (6000, 50000)
    tps_grid_range: tuple[int, int] = (3, 5)
    control_noise_sigma: float = 25.0
    control_noise_distribution: str = "normal"
    global_shift_sigma: float = 30.0
    shadow_prob: float = 0.2
    shadow_opacity_range: tuple[float, float] = (0.4, 0.6)
    component_counts: tuple[int, ...] = (100, 1000)
    eval_stride: int = 8
    regularization: float = 1e-6
    max_redraws: int = 10

    def __post_init__(self):
        for lo, hi in (self.n_layers_range, self.occluder_size_range,
                       self.tps_grid_range, self.shadow_opacity_range):
            if hi < lo:
                raise InvalidParameterError(f"empty range ({lo}, {hi})")
        if not 0.0 <= self.shadow_prob <= 1.0:
            raise InvalidParameterError("shadow_prob must be in [0, 1]")


@dataclass(frozen=True)
class BackgroundSpec:
    warp_pair: tuple[TpsWarp, TpsWarp]  # (phi_1, phi_0)
    shift: tuple[float, float]          # global background translation d


@dataclass(frozen=True)
class LayerSpec:
    mask: np.ndarray                    # occluder matte in source coordinates
    kind: str                           # "opaque" or "shadow"
    shadow_opacity: float
    warp_pair: tuple[TpsWarp, TpsWarp]  # (psi_1, psi_0)
    p0: tuple[int, int]
    p1: tuple[int, int]
    depth_rank: int


@dataclass
class ForegroundLayer:
    """Warped per-layer rasters in native (un-placed) coordinates.

    (f0, m0, flow) cover window0 and (f1, m1) cover window1, both given as
    (y0, y1, x0, x1) in native coordinates; the layer is exactly zero
    outside its window. With stride-1 synthesis the windows span the full
    frame.
    """

    spec: LayerSpec
    f0: np.ndarray
    f1: np.ndarray
    m0: np.ndarray
    m1: np.ndarray
    flow: np.ndarray
    window0: tuple[int, int, int, int] | None = None
    window1: tuple[int, int, int, int] | None = None


@dataclass
class SceneSample:
    frame0: np.ndarray
    frame1: np.ndarray
    flow: np.ndarray
    occlusion: np.ndarray      # 1 where a frame-0 pixel has no exact match
    shadow_region: np.ndarray  # soft union of shadow mattes in either frame
    provenance: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frame0.shape[:2]


def inpaint_with_auxiliary(base, hole, aux) -> np.ndarray:
    """Fill the hole region of `base` with texture from `aux`."""
    base = as_image(base)
    aux = as_image(aux)
    hole = np.asarray(hole, dtype=DTYPE)
    if base.shape != aux.shape or hole.shape != base.shape[:2]:
        raise InvalidDimensionError(
            f"inpaint shape mismatch: base {base.shape} hole {hole.shape} aux {aux.shape}"
        )
    return alpha_composite(aux, hole, base)


def synthesize_background(inpainted, spec: BackgroundSpec, stride: int = 1):
    """Warp the inpainted image twice and derive the exact background flow.

    Returns (B0, B1, flow). B1 is the inpainted image warped by phi_1; B0
    is B1 resampled at phi_0(x) + d, so both frames carry one extra level
    of interpolation relative to each other's source, and the flow
    phi_0(x) - x + d maps B0 pixels onto B1 exactly by construction.
    """
    inpainted = as_image(inpainted)
    h, w = inpainted.shape[:2]
    phi1, phi0 = spec.warp_pair
    g1 = dense_coords(phi1, h, w, stride=stride)
    b1 = bilinear_sample(inpainted, g1, border="clamp")
    g0 = dense_coords(phi0, h, w, stride=stride)
    d = np.asarray(spec.shift, dtype=DTYPE)
    sample_at = g0 + d
    b0 = bilinear_sample(b1, sample_at, border="clamp")
    flow = sample_at - make_identity_grid(h, w)
    return b0, b1, flow


def _mask_bbox(mask: np.ndarray):
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1


def _crop_support(window, support, *arrays):
    """Shrink a windowed raster set to the bounding box of `support`.

    Falls back to a 1x1 corner window when the support is empty (the layer
    is invisible in that frame but downstream code still wants arrays).
    """
    ys = np.flatnonzero(support.any(axis=1))
    if ys.size == 0:
        one = (window[0], window[0] + 1, window[2], window[2] + 1)
        return one, [np.zeros_like(a[:1, :1]) for a in arrays]
    xs = np.flatnonzero(support.any(axis=0))
    y0, y1, x0, x1 = int(ys[0]), int(ys[-1]) + 1, int(xs[0]), int(xs[-1]) + 1
    new = (window[0] + y0, window[0] + y1, window[2] + x0, window[2] + x1)
    return new, [a[y0:y1, x0:x1] for a in arrays]


def synthesize_foreground(source, layer: LayerSpec, stride: int = 1) -> ForegroundLayer:
    """Cut the layer texture from the source and warp it twice.

    F = mask * source; (F1, M1) are sampled at psi_1, (F0, M0) resampled
    from them at psi_0, and the layer flow is psi_0(x) - x. With stride > 1
    computation is restricted to a window guaranteed to contain the warped
    mask support (everything outside is exactly zero).
    """
    source = as_image(source)
    h, w = source.shape[:2]
    mask = np.asarray(layer.mask, dtype=DTYPE)
    if mask.shape != (h, w):
        raise InvalidDimensionError("layer mask does not match source dimensions")
    if not np.any(mask >= 0.5):
        raise DegenerateLayerError("layer mask is empty")
    psi1, psi0 = layer.warp_pair

    if stride == 1:
        fg = mask[:, :, None] * source
        g1 = dense_coords(psi1, h, w, stride=1)
        f1 = bilinear_sample(fg, g1, border="zero")
        m1 = sample_mask(mask, g1)
        g0 = dense_coords(psi0, h, w, stride=1)
        f0 = bilinear_sample(f1, g0, border="zero")
        m0 = sample_mask(m1, g0)
        flow = g0 - make_identity_grid(h, w)
        full = (0, h, 0, w)
        return ForegroundLayer(layer, f0, f1, m0, m1, flow, full, full)

    by0, by1, bx0, bx1 = _mask_bbox(mask > 0)
    win1 = support_window(psi1, h, w, (by0, by1, bx0, bx1))
    if win1 is None:
        win1 = (by0, by0 + 1, bx0, bx0 + 1)
    g1 = dense_coords(psi1, h, w, stride=stride, window=win1)
    # the texture cut is zero outside the mask bbox, so a bbox-cropped cut
    # sampled with zero border is exact
    g1 -= np.array([bx0, by0], DTYPE)
    cut = mask[by0:by1, bx0:bx1, None] * source[by0:by1, bx0:bx1]
    f1 = bilinear_sample(cut, g1, border="zero")
    m1 = sample_mask(mask[by0:by1, bx0:bx1], g1)
    win1, (f1, m1) = _crop_support(win1, m1 > 0, f1, m1)

    win0 = support_window(psi0, h, w, win1)
    if win0 is None:
        win0 = (win1[0], win1[0] + 1, win1[2], win1[2] + 1)
    y0, y1, x0, x1 = win0
    g0 = dense_coords(psi0, h, w, stride=stride, window=win0)
    # f1/m1 live on window1; shift the sampling coordinates into that
    # array's frame (zero border covers everything outside it)
    g0_local = g0 - np.array([win1[2], win1[0]], DTYPE)
    f0 = bilinear_sample(f1, g0_local, border="zero")
    m0 = sample_mask(m1, g0_local)
    gx, gy = np.meshgrid(np.arange(x0, x1, dtype=DTYPE), np.arange(y0, y1, dtype=DTYPE))
    flow = g0 - np.stack([gx, gy], axis=-1)
    win0, (f0, m0, flow) = _crop_support(win0, m0 > 0, f0, m0, flow)
    return ForegroundLayer(layer, f0, f1, m0, m1, flow, win0, win1)


def _overlap(window, offset, h, w):
    """Destination/source slice pair for pasting a windowed raster at `offset`.

    Returns None when the placed window misses the frame entirely.
    """
    y0, y1, x0, x1 = window
    dx, dy = offset
    oy0, oy1 = max(0, y0 + dy), min(h, y1 + dy)
    ox0, ox1 = max(0, x0 + dx), min(w, x1 + dx)
    if oy0 >= oy1 or ox0 >= ox1:
        return None
    dst = (slice(oy0, oy1), slice(ox0, ox1))
    src = (slice(oy0 - dy - y0, oy1 - dy - y0), slice(ox0 - dx - x0, ox1 - dx - x0))
    return dst, src


def composite_scene(bg, layers: list[ForegroundLayer]) -> SceneSample:
    """Stack layers over the background in depth order and compose the flow.

    For each opaque layer the frames are alpha-composited with the soft
    mattes while flow ownership and depth labels use the 0.5-binarized
    mattes; the flow of a layer placed at p0/p1 is psi_0(x - p0) - (x - p0)
    + (p1 - p0). Shadow layers darken the frames by (1 - alpha * matte) and
    leave the flow untouched. A pixel is occluded when its flow target
    leaves the image, when the depth label at the (rounded) target
    disagrees with its own, or when it sits on a matte blend fringe where
    no single exact correspondence exists.
    """
    b0, b1, bg_flow = bg
    frame0 = b0.copy()
    frame1 = b1.copy()
    flow = np.asarray(bg_flow, dtype=DTYPE).copy()
    h, w = frame0.shape[:2]
    labels0 = np.zeros((h, w), np.int16)
    labels1 = np.zeros((h, w), np.int16)
    shadow0 = np.zeros((h, w), DTYPE)
    shadow1 = np.zeros((h, w), DTYPE)
    mix0 = np.zeros((h, w), bool)
    mix1 = np.zeros((h, w), bool)

    ranks = [layer.spec.depth_rank for layer in layers]
    if any(b < a for a, b in zip(ranks, ranks[1:])):
        raise InvalidParameterError("layers must be sorted by ascending depth_rank")

    for idx, layer in enumerate(layers):
        spec = layer.spec
        p0 = (int(spec.p0[0]), int(spec.p0[1]))
        p1 = (int(spec.p1[0]), int(spec.p1[1]))
        at0 = _overlap(layer.window0 or (0, h, 0, w), p0, h, w)
        if at0 is None:
            raise DegenerateLayerError("layer placed fully outside the frame")
        at1 = _overlap(layer.window1 or (0, h, 0, w), p1, h, w)
        dst0, src0 = at0

        if spec.kind == OPAQUE:
            m0v = layer.m0[src0]
            a0 = m0v[..., None]
            frame0[dst0] = a0 * layer.f0[src0] + (1.0 - a0) * frame0[dst0]
            delta = np.array([p1[0] - p0[0], p1[1] - p0[1]], DTYPE)
            own0 = m0v >= 0.5
            flow[dst0][own0] = layer.flow[src0][own0] + delta
            labels0[dst0][own0] = idx + 1
            mix0[dst0] |= (m0v > MIX_LO) & (m0v < MIX_HI)
            if at1 is not None:
                dst1, src1 = at1
                m1v = layer.m1[src1]
                a1 = m1v[..., None]
                frame1[dst1] = a1 * layer.f1[src1] + (1.0 - a1) * frame1[dst1]
                labels1[dst1][m1v >= 0.5] = idx + 1
                mix1[dst1] |= (m1v > MIX_LO) & (m1v < MIX_HI)
        elif spec.kind == SHADOW:
            alpha = float(spec.shadow_opacity)
            m0v = layer.m0[src0]
            frame0[dst0] *= 1.0 - alpha * m0v[..., None]
            np.maximum(shadow0[dst0], m0v, out=shadow0[dst0])
            if at1 is not None:
                dst1, src1 = at1
                m1v = layer.m1[src1]
                frame1[dst1] *= 1.0 - alpha * m1v[..., None]
                np.maximum(shadow1[dst1], m1v, out=shadow1[dst1])
        else:
            raise InvalidParameterError(f"unknown layer kind: {spec.kind}")

    occlusion, target = _occlusion_mask(flow, labels0, labels1, mix0, mix1)
    shadow_region = np.maximum(
        shadow0, bilinear_sample(shadow1[:, :, None], target, border="zero")[:, :, 0]
    )
    return SceneSample(frame0, frame1, flow, occlusion, shadow_region)


def _occlusion_mask(flow, labels0, labels1, mix0, mix1):
    h, w = labels0.shape
    target = make_identity_grid(h, w) + flow
    tx = np.rint(target[..., 0]).astype(np.int32)
    ty = np.rint(target[..., 1]).astype(np.int32)
    oob = (tx < 0) | (tx >= w) | (ty < 0) | (ty >= h)
    txc = np.clip(tx, 0, w - 1)
    tyc = np.clip(ty, 0, h - 1)
    occ = oob | (labels1[tyc, txc] != labels0)
    # blend fringes: frame-0 mixed pixels, and targets whose bilinear
    # footprint can touch a mixed frame-1 pixel
    if mix1.any():
        kernel = np.ones((3, 3), bool)
        from scipy.ndimage import binary_dilation

        mix1d = binary_dilation(mix1, structure=kernel)
        occ |= mix1d[tyc, txc] & ~oob
    occ |= mix0
    return occ.astype(DTYPE), target


# --- parameter sampling and end-to-end generation ---------------------------


@dataclass
class LayerParams:
    map_index: int
    target_size: int
    seed_segment: int
    grid_size: int
    shift: tuple[int, int]
    shadow: bool
    opacity: float
    control_1: ControlGrid | None = None
    control_0: ControlGrid | None = None
    mask: np.ndarray | None = None

    def record(self) -> dict:
        return {
            "map_index": self.map_index,
            "target_size": self.target_size,
            "seed_segment": self.seed_segment,
            "grid_size": self.grid_size,
            "shift": list(self.shift),
            "shadow": self.shadow,
            "opacity": self.opacity,
        }


@dataclass
class SceneParams:
    n_layers: int
    bg_grid_size: int
    bg_shift: tuple[float, float]
    bg_control_1: ControlGrid | None
    bg_control_0: ControlGrid | None
    layers: list[LayerParams]

    def record(self) -> dict:
        return {
            "n_layers": self.n_layers,
            "background": {
                "grid_size": self.bg_grid_size,
                "shift": list(self.bg_shift),
            },
            "layers": [lp.record() for lp in self.layers],
        }


def draw_scene_params(
    config: SynthesisConfig,
    stack: SegmentationStack | None,
    rng: np.random.Generator,
    height: int | None = None,
    width: int | None = None,
    adjacencies=None,
    with_masks: bool = True,
) -> SceneParams:
    """Draw every random quantity of one scene from `rng`.

    The result fully determines the scene given the source inputs. With
    `with_masks=False` only the scalar parameters are drawn (no occluder
    growth, no control grids), which is what distribution checks need.
    `height`/`width` default to the stack's dimensions.
    """
    if stack is not None:
        height, width = stack.maps[0].shape
    if with_masks and (height is None or width is None):
        raise InvalidParameterError("image dimensions required to draw full params")

    n_lo, n_hi = config.n_layers_range
    n_layers = int(rng.integers(n_lo, n_hi + 1))

    def draw_deformation(grid_size):
        c1 = sample_control_grid(
            height, width, grid_size, config.control_noise_sigma, rng,
            config.control_noise_distribution,
        )
        c0 = sample_control_grid(
            height, width, grid_size, config.control_noise_sigma, rng,
            config.control_noise_distribution,
        )
        return c1, c0

    g_lo, g_hi = config.tps_grid_range
    bg_grid = int(rng.integers(g_lo, g_hi + 1))
    bg_shift = tuple(rng.normal(0.0, config.global_shift_sigma, size=2))
    bg_c1 = bg_c0 = None
    if with_masks:
        bg_c1, bg_c0 = draw_deformation(bg_grid)

    if with_masks and adjacencies is None and stack is not None:
        adjacencies = stack.adjacencies()

    size_lo, size_hi = config.occluder_size_range
    layers = []
    for _ in range(n_layers):
        mask = None
        for attempt in range(config.max_redraws + 1):
            map_index = int(rng.integers(len(stack.maps) if stack else len(config.component_counts)))
            target_size = int(rng.integers(size_lo, size_hi + 1))
            if stack is not None:
                seg = stack.maps[map_index]
                seed_segment = int(rng.integers(seg.n_segments))
            else:
                seed_segment = 0
            if not with_masks:
                break
            mask = grow_region(seg, adjacencies[map_index], seed_segment, target_size, rng)
            covered = mask >= 0.5
            if covered.any() and not covered.all():
                break
            mask = None
        else:
            raise DegenerateLayerError(
                f"no usable occluder after {config.max_redraws} redraws"
            )
        grid_size = int(rng.integers(g_lo, g_hi + 1))
        shift = rng.normal(0.0, config.global_shift_sigma, size=2)
        shift = (int(np.rint(shift[0])), int(np.rint(shift[1])))
        shadow = bool(rng.random() < config.shadow_prob)
        op_lo, op_hi = config.shadow_opacity_range
        opacity = float(rng.uniform(op_lo, op_hi))
        lp = LayerParams(map_index, target_size, seed_segment, grid_size,
                         shift, shadow, opacity, mask=mask)
        if with_masks:
            lp.control_1, lp.control_0 = draw_deformation(grid_size)
        layers.append(lp)

    return SceneParams(n_layers, bg_grid, bg_shift, bg_c1, bg_c0, layers)


def realize_scene(source, aux, params: SceneParams, config: SynthesisConfig) -> SceneSample:
    """Deterministically build the scene described by `params`."""
    source = as_image(source)
    aux = as_image(aux)
    if source.shape != aux.shape:
        raise InvalidDimensionError("source and auxiliary images must share dimensions")
    stride = config.eval_stride

    if params.layers:
        hole = np.max([lp.mask for lp in params.layers], axis=0)
    else:
        hole = np.zeros(source.shape[:2], DTYPE)
    inpainted = inpaint_with_auxiliary(source, hole, aux)

    bg_spec = BackgroundSpec(
        warp_pair=(
            fit_tps(params.bg_control_1, config.regularization),
            fit_tps(params.bg_control_0, config.regularization),
        ),
        shift=params.bg_shift,
    )
    bg = synthesize_background(inpainted, bg_spec, stride=stride)

    layers = []
    for rank, lp in enumerate(params.layers):
        spec = LayerSpec(
            mask=lp.mask,
            kind=SHADOW if lp.shadow else OPAQUE,
            shadow_opacity=lp.opacity,
            warp_pair=(
                fit_tps(lp.control_1, config.regularization),
                fit_tps(lp.control_0, config.regularization),
            ),
            p0=(0, 0),
            p1=lp.shift,
            depth_rank=rank,
        )
        layers.append(synthesize_foreground(source, spec, stride=stride))
    sample = composite_scene(bg, layers)
    sample.provenance = {"params": params.record(), "config": asdict(config)}
    return sample


def generate_sample(
    source,
    aux,
    stack: SegmentationStack,
    config: SynthesisConfig,
    seed,
    adjacencies=None,
) -> SceneSample:
    """Generate one fully random scene from a seed (pure in all inputs)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    params = draw_scene_params(config, stack, rng, adjacencies=adjacencies)
    sample = realize_scene(source, aux, params, config)
    sample.provenance["seed"] = seed if isinstance(seed, int) else list(seed)
    return sample
