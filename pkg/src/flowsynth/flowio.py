"""Dataset I/O: image ingestion, flow file formats, visualization, manifests.

Formats:

* Middlebury .flo: float32 magic 202021.25, int32 width, int32 height,
  then row-major interleaved float32 (u, v) pairs, all little-endian.
* KITTI flow PNG: 16-bit 3-channel PNG storing round(f * 64 + 2^15) in
  channels 1-2 and a {0, 1} validity flag in channel 3.
* Manifests: line-delimited JSON; first record is the config snapshot,
  every following line is one sample record.
"""

from __future__ import annotations

import json
import logging
import os
from functools import lru_cache
from pathlib import Path

import cv2
import numpy as np
from PIL import Image as PILImage

from .errors import (
    EmptyCorpusError,
    FlowEncodeError,
    FlowFormatError,
    InvalidParameterError,
)
from .imaging import DTYPE
from .synthesis import SceneSample

log = logging.getLogger("flowsynth")

FLO_MAGIC = 202021.25
MANIFEST_SCHEMA_VERSION = 1
GENERATOR_VERSION = "0.1.0"

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".webp", ".tif", ".tiff"}


# --- image ingestion --------------------------------------------------------


def _load_rgb(path) -> np.ndarray:
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=DTYPE) / 255.0
    return arr


def _fit_to(img: np.ndarray, target_size: tuple[int, int]) -> np.ndarray:
    """Scale to cover (th, tw) preserving aspect, then center-crop."""
    th, tw = target_size
    h, w = img.shape[:2]
    s = max(th / h, tw / w)
    if s != 1.0:
        img = cv2.resize(img, (max(tw, int(round(w * s))), max(th, int(round(h * s)))),
                         interpolation=cv2.INTER_AREA if s < 1 else cv2.INTER_LINEAR)
    h, w = img.shape[:2]
    y0 = (h - th) // 2
    x0 = (w - tw) // 2
    return np.ascontiguousarray(img[y0:y0 + th, x0:x0 + tw])


class ImageCorpus:
    """Lazy, deterministic-order image collection sharing one output size."""

    def __init__(self, paths, target_size: tuple[int, int] | None = None):
        self.paths = tuple(str(p) for p in paths)
        self.target_size = target_size
        self._load = lru_cache(maxsize=8)(self._load_uncached)

    def __len__(self) -> int:
        return len(self.paths)

    def _load_uncached(self, index: int) -> np.ndarray:
        img = _load_rgb(self.paths[index])
        if self.target_size is not None:
            img = _fit_to(img, self.target_size)
        return img

    def load(self, index: int) -> np.ndarray:
        return self._load(int(index))


def ingest_images(
    directory,
    min_size: tuple[int, int] = (64, 64),
    target_size: tuple[int, int] | None = None,
) -> ImageCorpus:
    """Collect usable images from a directory in lexicographic path order.

    Images smaller than `min_size` (h, w) are discarded with a log line.
    When `target_size` is set every loaded image is rescaled and
    center-cropped to exactly that size.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise IOError(f"not a readable directory: {directory}")
    kept = []
    for path in sorted(directory.rglob("*")):
        if path.suffix.lower() not in IMAGE_EXTENSIONS or not path.is_file():
            continue
        try:
            with PILImage.open(path) as im:
                w, h = im.size
        except Exception as exc:
            log.warning("skipping unreadable image %s (%s)", path, exc)
            continue
        if h < min_size[0] or w < min_size[1]:
            log.info("skipping %s: %dx%d below minimum %s", path, h, w, min_size)
            continue
        if target_size is not None and (h < target_size[0] // 4 or w < target_size[1] // 4):
            log.info("skipping %s: too small to fit %s", path, target_size)
            continue
        kept.append(str(path))
    if not kept:
        raise EmptyCorpusError(f"no usable images in {directory}")
    return ImageCorpus(tuple(kept), target_size)


# --- .flo -------------------------------------------------------------------


def write_flo(flow: np.ndarray, path) -> None:
    flow = np.asarray(flow, dtype=np.float32)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise InvalidParameterError(f"not a flow field: {flow.shape}")
    if not np.all(np.isfinite(flow)):
        raise InvalidParameterError("flow must be finite")
    h, w = flow.shape[:2]
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(np.array([FLO_MAGIC], dtype="<f4").tobytes())
        f.write(np.array([w, h], dtype="<i4").tobytes())
        f.write(flow.astype("<f4").tobytes())
    os.replace(tmp, path)


def read_flo(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = np.frombuffer(f.read(4), dtype="<f4")
        if magic.size != 1 or magic[0] != FLO_MAGIC:
            raise FlowFormatError(f"bad .flo magic in {path}")
        dims = np.frombuffer(f.read(8), dtype="<i4")
        if dims.size != 2:
            raise FlowFormatError(f"truncated .flo header in {path}")
        w, h = int(dims[0]), int(dims[1])
        payload = f.read()
    if len(payload) % 4:
        raise FlowFormatError(f"truncated .flo payload in {path}")
    data = np.frombuffer(payload, dtype="<f4")
    if data.size != h * w * 2:
        raise FlowFormatError(f"truncated .flo payload in {path}")
    return data.reshape(h, w, 2).astype(np.float32)


# --- KITTI 16-bit PNG -------------------------------------------------------


def write_kitti_png(flow: np.ndarray, valid: np.ndarray | None, path) -> None:
    flow = np.asarray(flow, dtype=np.float64)
    h, w = flow.shape[:2]
    if np.any(np.abs(flow) >= 512.0):
        raise FlowEncodeError("flow exceeds the encodable range (|f| < 512 px)")
    if valid is None:
        valid = np.ones((h, w), DTYPE)
    enc = np.zeros((h, w, 3), np.uint16)
    enc[..., 0] = np.round(flow[..., 0] * 64.0 + 2 ** 15).astype(np.uint16)
    enc[..., 1] = np.round(flow[..., 1] * 64.0 + 2 ** 15).astype(np.uint16)
    enc[..., 2] = (np.asarray(valid) >= 0.5).astype(np.uint16)
    tmp = f"{path}.tmp.{os.getpid()}.png"
    # cv2 stores channels in BGR order; flip so the file reads R=u, G=v, B=valid
    if not cv2.imwrite(tmp, enc[..., ::-1]):
        raise IOError(f"failed to write {path}")
    os.replace(tmp, path)


def read_kitti_png(path) -> tuple[np.ndarray, np.ndarray]:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None or raw.ndim != 3 or raw.shape[2] != 3 or raw.dtype != np.uint16:
        raise FlowFormatError(f"not a 16-bit KITTI flow PNG: {path}")
    rgb = raw[..., ::-1].astype(np.float64)
    flow = np.stack([(rgb[..., 0] - 2 ** 15) / 64.0,
                     (rgb[..., 1] - 2 ** 15) / 64.0], axis=-1).astype(np.float32)
    valid = (rgb[..., 2] > 0).astype(DTYPE)
    flow[valid < 0.5] = 0.0
    return flow, valid


# --- visualization ----------------------------------------------------------


def colorize_flow(flow: np.ndarray, max_magnitude: float | None = None) -> np.ndarray:
    """Color-wheel rendering: hue from direction, saturation from magnitude.

    Zero flow maps to white. `max_magnitude` defaults to the field's 99th
    percentile magnitude (or 1 if the field is all zero).
    """
    flow = np.asarray(flow, dtype=np.float64)
    u, v = flow[..., 0], flow[..., 1]
    mag = np.sqrt(u * u + v * v)
    if max_magnitude is None:
        max_magnitude = float(np.percentile(mag, 99.0)) or 1.0
    hue = (np.arctan2(v, u) / (2.0 * np.pi)) % 1.0
    sat = np.clip(mag / max_magnitude, 0.0, 1.0)
    hsv = np.stack([hue, sat, np.ones_like(hue)], axis=-1)
    from .augment import _hsv_to_rgb

    return _hsv_to_rgb(hsv).astype(DTYPE)


# --- sample serialization and manifests ------------------------------------


def _write_png8(arr: np.ndarray, path) -> None:
    data = np.clip(np.asarray(arr, np.float64), 0.0, 1.0)
    q = np.round(data * 255.0).astype(np.uint8)
    if q.ndim == 3 and q.shape[2] == 3:
        q = q[..., ::-1]  # RGB -> BGR for cv2
    elif q.ndim == 3 and q.shape[2] == 1:
        q = q[..., 0]
    tmp = f"{path}.tmp.{os.getpid()}.png"
    if not cv2.imwrite(tmp, q):
        raise IOError(f"failed to write {path}")
    os.replace(tmp, path)


def read_png8(path) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IOError(f"failed to read {path}")
    if raw.ndim == 3:
        raw = raw[..., ::-1]
    arr = raw.astype(DTYPE) / 255.0
    return arr[:, :, None] if arr.ndim == 2 else np.ascontiguousarray(arr)


def write_sample(
    sample: SceneSample,
    out_dir,
    sample_id: str,
    formats=("flo",),
) -> dict:
    """Write one sample's rasters and return its manifest record.

    Default layout: {id}_img1.png, {id}_img2.png, {id}_flow.flo (and/or
    {id}_flow.png for KITTI), {id}_occ.png, {id}_shadow.png.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {
        "id": sample_id,
        "generator_version": GENERATOR_VERSION,
        "provenance": sample.provenance,
    }
    frame0 = out_dir / f"{sample_id}_img1.png"
    frame1 = out_dir / f"{sample_id}_img2.png"
    occ = out_dir / f"{sample_id}_occ.png"
    shadow = out_dir / f"{sample_id}_shadow.png"
    _write_png8(sample.frame0, frame0)
    _write_png8(sample.frame1, frame1)
    _write_png8(sample.occlusion, occ)
    _write_png8(sample.shadow_region, shadow)
    record["frame0"] = frame0.name
    record["frame1"] = frame1.name
    record["occlusion"] = occ.name
    record["shadow"] = shadow.name
    for fmt in formats:
        if fmt == "flo":
            path = out_dir / f"{sample_id}_flow.flo"
            write_flo(sample.flow, path)
            record["flow"] = path.name
        elif fmt == "kitti":
            path = out_dir / f"{sample_id}_flow.png"
            write_kitti_png(sample.flow, 1.0 - sample.occlusion, path)
            record["flow_kitti"] = path.name
        else:
            raise InvalidParameterError(f"unknown flow format: {fmt}")
    return record


def write_manifest_header(path, config: dict) -> None:
    with open(path, "w") as f:
        f.write(json.dumps({
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "generator_version": GENERATOR_VERSION,
            "config": config,
        }, sort_keys=True) + "\n")


def append_manifest_record(path, record: dict) -> None:
    with open(path, "a") as f:
        f.write(json.dumps(record, sort_keys=True) + "\n")


def read_manifest(path) -> tuple[dict, list[dict]]:
    with open(path) as f:
        lines = [line for line in f if line.strip()]
    if not lines:
        raise EmptyCorpusError(f"empty manifest: {path}")
    header = json.loads(lines[0])
    if "schema_version" not in header:
        raise FlowFormatError(f"manifest missing schema_version: {path}")
    return header, [json.loads(line) for line in lines[1:]]


def load_manifest_sample(manifest_path, record: dict) -> SceneSample:
    """Reconstruct a SceneSample from its files next to the manifest."""
    base = Path(manifest_path).parent
    frame0 = read_png8(base / record["frame0"])
    frame1 = read_png8(base / record["frame1"])
    occ = read_png8(base / record["occlusion"])[..., 0]
    shadow = read_png8(base / record["shadow"])[..., 0]
    if "flow" in record:
        flow = read_flo(base / record["flow"])
    elif "flow_kitti" in record:
        flow, _ = read_kitti_png(base / record["flow_kitti"])
    else:
        raise FlowFormatError(f"record {record.get('id')} has no flow file")
    return SceneSample(frame0, frame1, flow, occ, shadow,
                       provenance=record.get("provenance", {}))


def validate_manifest_files(path) -> list[str]:
    """Check that every referenced file exists with consistent dimensions."""
    header, records = read_manifest(path)
    del header
    base = Path(path).parent
    problems = []
    seen_seeds = set()
    for record in records:
        seed = json.dumps(record.get("provenance", {}).get("seed"))
        if seed in seen_seeds:
            problems.append(f"{record['id']}: duplicate seed {seed}")
        seen_seeds.add(seed)
        dims = set()
        for key in ("frame0", "frame1", "occlusion", "shadow", "flow", "flow_kitti"):
            if key not in record:
                continue
            file = base / record[key]
            if not file.exists():
                problems.append(f"{record['id']}: missing file {record[key]}")
                continue
            if key == "flow":
                dims.add(read_flo(file).shape[:2])
            elif key == "flow_kitti":
                dims.add(read_kitti_png(file)[0].shape[:2])
            else:
                dims.add(read_png8(file).shape[:2])
        if len(dims) > 1:
            problems.append(f"{record['id']}: inconsistent dimensions {sorted(dims)}")
    return problems
