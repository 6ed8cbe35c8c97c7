"""Flow-consistent photometric and geometric augmentation of scene samples.

Every geometric transform is applied identically to frames, masks, and
flow so that the ground truth stays valid; photometric jitter leaves the
flow untouched. The fixed application order is jitter -> scale -> flips ->
crop -> erase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .imaging import DTYPE, bilinear_sample, make_identity_grid, sample_mask
from .synthesis import SceneSample


@dataclass(frozen=True)
class AugmentConfig:
    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.2
    hue: float = 0.05
    asymmetric_jitter: bool = True
    scale_range: tuple[float, float] = (1.0, 1.0)
    h_flip_prob: float = 0.5
    v_flip_prob: float = 0.1
    crop_size: tuple[int, int] | None = None  # (height, width)
    erase_prob: float = 0.5
    erase_area_range: tuple[float, float] = (0.002, 0.02)
    erase_marks_occluded: bool = True

    def __post_init__(self):
        for p in (self.h_flip_prob, self.v_flip_prob, self.erase_prob):
            if not 0.0 <= p <= 1.0:
                raise InvalidParameterError("probabilities must be in [0, 1]")


def _copy(sample: SceneSample, **kw) -> SceneSample:
    fields = {
        "frame0": sample.frame0,
        "frame1": sample.frame1,
        "flow": sample.flow,
        "occlusion": sample.occlusion,
        "shadow_region": sample.shadow_region,
        "provenance": dict(sample.provenance),
    }
    fields.update(kw)
    return SceneSample(**fields)


# --- photometric ------------------------------------------------------------


def _rgb_to_hsv(img):
    """RGB [0,1] to HSV with hue normalized to [0,1)."""
    import cv2

    hsv = cv2.cvtColor(np.ascontiguousarray(img, dtype=np.float32), cv2.COLOR_RGB2HSV)
    hsv[..., 0] /= 360.0
    return hsv


def _hsv_to_rgb(hsv):
    import cv2

    hsv = np.ascontiguousarray(hsv, dtype=np.float32).copy()
    hsv[..., 0] = (hsv[..., 0] % 1.0) * 360.0
    return cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)


def _jitter_frame(img, params):
    brightness, contrast, saturation, hue = params
    # brightness, contrast and saturation compose into one affine map in the
    # pixel and its channel mean, so the frame is only read twice:
    #   out = b*c*s * img + b*c*(1-s) * gray + b*mean*(1-c)
    mean = img.mean(dtype=DTYPE) * DTYPE(brightness)
    offset = mean * DTYPE(1.0 - contrast)
    if img.shape[2] == 3 and saturation != 1.0:
        gray = img.mean(axis=-1, keepdims=True, dtype=DTYPE)
        out = (img * DTYPE(brightness * contrast * saturation)
               + gray * DTYPE(brightness * contrast * (1.0 - saturation))
               + offset)
    else:
        out = img * DTYPE(brightness * contrast) + offset
    if img.shape[2] == 3 and hue != 0.0:
        hsv = _rgb_to_hsv(np.clip(out, 0.0, 1.0))
        hsv[..., 0] = (hsv[..., 0] + DTYPE(hue)) % 1.0
        out = _hsv_to_rgb(hsv)
    return np.clip(out, 0.0, 1.0)


def color_jitter(sample: SceneSample, config: AugmentConfig, rng: np.random.Generator) -> SceneSample:
    """Jitter brightness/contrast/saturation/hue; flow is untouched.

    By default the two frames draw independent parameters, simulating an
    illumination change between them.
    """
    def draw():
        return (
            1.0 + rng.uniform(-config.brightness, config.brightness),
            1.0 + rng.uniform(-config.contrast, config.contrast),
            1.0 + rng.uniform(-config.saturation, config.saturation),
            rng.uniform(-config.hue, config.hue),
        )

    p0 = draw()
    p1 = draw() if config.asymmetric_jitter else p0
    if max(config.brightness, config.contrast, config.saturation, config.hue) == 0:
        return sample
    return _copy(sample, frame0=_jitter_frame(sample.frame0, p0),
                 frame1=_jitter_frame(sample.frame1, p1))


# --- geometric --------------------------------------------------------------


def _resample_grid(h_out, w_out, h_in, w_in):
    xs = (np.arange(w_out, dtype=DTYPE) * ((w_in - 1) / (w_out - 1)) if w_out > 1
          else np.zeros(w_out, DTYPE))
    ys = (np.arange(h_out, dtype=DTYPE) * ((h_in - 1) / (h_out - 1)) if h_out > 1
          else np.zeros(h_out, DTYPE))
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx, gy], axis=-1)


def scale(sample: SceneSample, factor: float) -> SceneSample:
    """Uniformly rescale the sample; flow vectors are scaled by `factor`."""
    if factor <= 0:
        raise InvalidParameterError("scale factor must be > 0")
    if factor == 1.0:
        return _copy(sample)
    h, w = sample.shape
    h2, w2 = int(round(h * factor)), int(round(w * factor))
    if h2 < 1 or w2 < 1:
        raise InvalidParameterError(f"scale factor {factor} collapses the image")
    grid = _resample_grid(h2, w2, h, w)
    frame0 = bilinear_sample(sample.frame0, grid)
    frame1 = bilinear_sample(sample.frame1, grid)
    u = bilinear_sample(sample.flow[..., 0:1], grid)[..., 0] * factor
    v = bilinear_sample(sample.flow[..., 1:2], grid)[..., 0] * factor
    occ = sample_mask(sample.occlusion, grid)
    shadow = sample_mask(sample.shadow_region, grid)
    return _copy(sample, frame0=frame0, frame1=frame1,
                 flow=np.stack([u, v], axis=-1), occlusion=occ, shadow_region=shadow)


def flip(sample: SceneSample, horizontal: bool = False, vertical: bool = False) -> SceneSample:
    """Mirror the sample; flipped axes negate the matching flow component."""
    if not horizontal and not vertical:
        return _copy(sample)

    def fl(arr):
        if horizontal:
            arr = arr[:, ::-1]
        if vertical:
            arr = arr[::-1]
        return np.ascontiguousarray(arr)

    flow = fl(sample.flow).copy()
    if horizontal:
        flow[..., 0] = -flow[..., 0]
    if vertical:
        flow[..., 1] = -flow[..., 1]
    return _copy(sample, frame0=fl(sample.frame0), frame1=fl(sample.frame1),
                 flow=flow, occlusion=fl(sample.occlusion),
                 shadow_region=fl(sample.shadow_region))


def crop(sample: SceneSample, origin: tuple[int, int], size: tuple[int, int]) -> SceneSample:
    """Crop all rasters identically; targets leaving the window become occluded."""
    y0, x0 = int(origin[0]), int(origin[1])
    ch, cw = int(size[0]), int(size[1])
    h, w = sample.shape
    if y0 < 0 or x0 < 0 or ch < 1 or cw < 1 or y0 + ch > h or x0 + cw > w:
        raise InvalidParameterError(f"crop {origin}+{size} outside {h}x{w}")
    sl = (slice(y0, y0 + ch), slice(x0, x0 + cw))
    flow = sample.flow[sl].copy()
    occ = sample.occlusion[sl].copy()
    target = make_identity_grid(ch, cw) + flow
    tx = np.rint(target[..., 0])
    ty = np.rint(target[..., 1])
    occ[(tx < 0) | (tx >= cw) | (ty < 0) | (ty >= ch)] = 1.0
    return _copy(sample, frame0=sample.frame0[sl].copy(), frame1=sample.frame1[sl].copy(),
                 flow=flow, occlusion=occ, shadow_region=sample.shadow_region[sl].copy())


def erase(sample: SceneSample, rect: tuple[int, int, int, int],
          mark_occluded: bool = True) -> SceneSample:
    """Replace a frame-1 rectangle (y0, x0, h, w) with the frame-1 mean color.

    Frame-0 pixels whose flow target falls in the rectangle lose their
    correspondence and are marked occluded (unless `mark_occluded` is off).
    """
    y0, x0, rh, rw = (int(v) for v in rect)
    h, w = sample.shape
    if y0 < 0 or x0 < 0 or y0 + rh > h or x0 + rw > w or rh < 0 or rw < 0:
        raise InvalidParameterError(f"erase rect {rect} outside {h}x{w}")
    if rh == 0 or rw == 0:
        return _copy(sample)
    frame1 = sample.frame1.copy()
    frame1[y0:y0 + rh, x0:x0 + rw] = sample.frame1.reshape(-1, sample.frame1.shape[2]).mean(axis=0)
    occ = sample.occlusion.copy()
    if mark_occluded:
        target = make_identity_grid(h, w) + sample.flow
        txf = np.floor(target[..., 0])
        txc = np.ceil(target[..., 0])
        tyf = np.floor(target[..., 1])
        tyc = np.ceil(target[..., 1])
        hit = (
            (txc >= x0) & (txf <= x0 + rw - 1) & (tyc >= y0) & (tyf <= y0 + rh - 1)
        )
        occ[hit] = 1.0
    return _copy(sample, frame1=frame1, occlusion=occ)


def augment(sample: SceneSample, config: AugmentConfig, rng: np.random.Generator) -> SceneSample:
    """Apply the full augmentation chain with the configured probabilities."""
    record = {}
    out = color_jitter(sample, config, rng)

    lo, hi = config.scale_range
    factor = float(rng.uniform(lo, hi)) if (lo, hi) != (1.0, 1.0) else 1.0
    if factor != 1.0:
        out = scale(out, factor)
        record["scale"] = factor

    horizontal = bool(rng.random() < config.h_flip_prob)
    vertical = bool(rng.random() < config.v_flip_prob)
    if horizontal or vertical:
        out = flip(out, horizontal, vertical)
        record["flip"] = [horizontal, vertical]

    if config.crop_size is not None:
        ch, cw = config.crop_size
        h, w = out.shape
        if ch > h or cw > w:
            raise InvalidParameterError(f"crop size {config.crop_size} exceeds sample {h}x{w}")
        y0 = int(rng.integers(h - ch + 1))
        x0 = int(rng.integers(w - cw + 1))
        out = crop(out, (y0, x0), (ch, cw))
        record["crop"] = [y0, x0, ch, cw]

    if rng.random() < config.erase_prob:
        h, w = out.shape
        a_lo, a_hi = config.erase_area_range
        area = float(rng.uniform(a_lo, a_hi)) * h * w
        aspect = float(rng.uniform(0.3, 3.0))
        rh = int(np.clip(round(np.sqrt(area * aspect)), 1, h))
        rw = int(np.clip(round(np.sqrt(area / aspect)), 1, w))
        y0 = int(rng.integers(h - rh + 1))
        x0 = int(rng.integers(w - rw + 1))
        out = erase(out, (y0, x0, rh, rw), config.erase_marks_occluded)
        record["erase"] = [y0, x0, rh, rw]

    out.provenance = dict(out.provenance)
    out.provenance["augment"] = record
    return out
