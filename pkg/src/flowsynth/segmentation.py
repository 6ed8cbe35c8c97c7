"""SLIC superpixels and growth of connected superpixel groups.

Segmentation runs k-means over (CIELAB color, x, y) features with
grid-initialized centers, then enforces 4-connectivity by merging orphan
fragments into their dominant neighbor. Grown regions are the occluder
masks used by scene synthesis.
"""

from __future__ import annotations

import hashlib
import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np
from skimage.measure import label as connected_label

from .errors import FlowFormatError, InvalidParameterError
from .imaging import DTYPE, as_image

CACHE_MAGIC = b"SLICMAP1"


@dataclass(frozen=True)
class SegmentationMap:
    labels: np.ndarray  # (H, W) int32, values in [0, n_segments)
    n_segments: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class SegmentationStack:
    """Coarse-to-fine family of segmentations of one image."""

    maps: tuple[SegmentationMap, ...]
    component_counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.maps) < 1:
            raise InvalidParameterError("stack needs at least one map")
        counts = self.component_counts
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise InvalidParameterError("component counts must be strictly increasing")

    def adjacencies(self) -> tuple["RegionAdjacency", ...]:
        """Adjacency graph per map, computed on first use and cached."""
        cached = getattr(self, "_adjacency_cache", None)
        if cached is None:
            cached = tuple(build_adjacency(m) for m in self.maps)
            object.__setattr__(self, "_adjacency_cache", cached)
        return cached


@dataclass(frozen=True)
class RegionAdjacency:
    n_segments: int
    edges: frozenset  # of frozenset pairs {a, b}
    neighbors: tuple = field(repr=False, default=())  # per-segment sorted neighbor ids
    segment_sizes: tuple = field(repr=False, default=())  # pixel count per segment


def _srgb_to_lab(img: np.ndarray) -> np.ndarray:
    """sRGB in [0,1] to CIELAB (D65). Grayscale maps to L with a*=b*=0."""
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    c = img.astype(np.float64)
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    m = np.array([
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ])
    xyz = lin @ m.T
    xyz /= np.array([0.95047, 1.0, 1.08883])
    f = np.where(xyz > 0.008856, np.cbrt(xyz), 7.787 * xyz + 16.0 / 116.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def _grid_centers(h: int, w: int, n: int) -> np.ndarray:
    """Roughly n seed positions on a regular grid, as (y, x) float pairs."""
    s = np.sqrt(h * w / n)
    nx = max(1, int(round(w / s)))
    ny = max(1, int(round(n / nx)))
    while nx * ny > n:
        if nx >= ny and nx > 1:
            nx -= 1
        elif ny > 1:
            ny -= 1
        else:
            break
    xs = (np.arange(nx) + 0.5) * (w / nx)
    ys = (np.arange(ny) + 0.5) * (h / ny)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([gy.ravel(), gx.ravel()], axis=-1)


def slic_segment(
    img,
    n_components: int,
    compactness: float = 10.0,
    iterations: int = 10,
) -> SegmentationMap:
    """SLIC clustering followed by 4-connectivity enforcement.

    The realized segment count may deviate from `n_components` (grid
    seeding and fragment merging both change it).
    """
    img = as_image(img)
    h, w = img.shape[:2]
    if n_components < 1 or n_components > h * w:
        raise InvalidParameterError(
            f"n_components must be in [1, {h * w}], got {n_components}"
        )
    if compactness <= 0 or iterations < 1:
        raise InvalidParameterError("compactness must be > 0 and iterations >= 1")
    if n_components == 1:
        return SegmentationMap(np.zeros((h, w), np.int32), 1)

    lab = _srgb_to_lab(img)
    s = np.sqrt(h * w / n_components)
    ratio = compactness / s
    centers_yx = _grid_centers(h, w, n_components)
    k = len(centers_yx)
    cy = centers_yx[:, 0].copy()
    cx = centers_yx[:, 1].copy()
    iy = np.clip(np.round(cy).astype(int), 0, h - 1)
    ix = np.clip(np.round(cx).astype(int), 0, w - 1)
    ccol = lab[iy, ix].copy()  # (k, 3)

    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    labels = np.zeros((h, w), np.int32)
    for _ in range(iterations):
        dist = np.full((h, w), np.inf)
        labels.fill(-1)
        for i in range(k):
            y0, y1 = int(max(0, cy[i] - s)), int(min(h, cy[i] + s + 1))
            x0, x1 = int(max(0, cx[i] - s)), int(min(w, cx[i] + s + 1))
            if y0 >= y1 or x0 >= x1:
                continue
            dc = lab[y0:y1, x0:x1] - ccol[i]
            d = np.einsum("ijk,ijk->ij", dc, dc)
            dxy = (ys[y0:y1, None] - cy[i]) ** 2 + (xs[None, x0:x1] - cx[i]) ** 2
            d = d + (ratio * ratio) * dxy
            win = dist[y0:y1, x0:x1]
            better = d < win
            win[better] = d[better]
            labels[y0:y1, x0:x1][better] = i
        # update centers from their assigned pixels
        flat = labels.ravel()
        valid = flat >= 0
        idx = flat[valid]
        counts = np.bincount(idx, minlength=k).astype(np.float64)
        counts[counts == 0] = 1.0
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        cy = np.bincount(idx, weights=yy.ravel()[valid], minlength=k) / counts
        cx = np.bincount(idx, weights=xx.ravel()[valid], minlength=k) / counts
        for c in range(3):
            ccol[:, c] = (
                np.bincount(idx, weights=lab[..., c].ravel()[valid], minlength=k)
                / counts
            )
    labels[labels < 0] = 0
    min_fragment = max(1, int(s * s / 4))
    labels, n_final = _enforce_connectivity(labels, min_fragment)
    return SegmentationMap(labels.astype(np.int32), n_final)


def _enforce_connectivity(labels: np.ndarray, min_fragment: int):
    """Merge fragments so each final label is one 4-connected region.

    Keeps the largest component of every SLIC label that clears the
    fragment threshold; every other component is absorbed by the adjacent
    component it shares the longest boundary with.
    """
    # +1 so no segment id collides with skimage's background value of 0
    comp = connected_label(labels + 1, connectivity=1)
    comp -= 1
    n_comp = comp.max() + 1
    sizes = np.bincount(comp.ravel(), minlength=n_comp)
    seg_of = np.zeros(n_comp, dtype=np.int64)
    seg_of[comp.ravel()] = labels.ravel()

    # largest component per original segment
    order = np.argsort(sizes)[::-1]
    keep = np.zeros(n_comp, dtype=bool)
    seen = set()
    for c in order:
        sgm = seg_of[c]
        if sgm not in seen and sizes[c] >= min_fragment:
            seen.add(sgm)
            keep[c] = True
    if not keep.any():
        keep[order[0]] = True

    # boundary lengths between adjacent components
    pairs = []
    a, b = comp[:, :-1].ravel(), comp[:, 1:].ravel()
    m = a != b
    pairs.append(np.stack([a[m], b[m]], axis=1))
    a, b = comp[:-1, :].ravel(), comp[1:, :].ravel()
    m = a != b
    pairs.append(np.stack([a[m], b[m]], axis=1))
    pairs = np.concatenate(pairs)
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    uniq, counts = np.unique(lo.astype(np.int64) * n_comp + hi, return_counts=True)
    nbr: dict[int, list[tuple[int, int]]] = {}
    for key, cnt in zip(uniq, counts):
        i, j = int(key // n_comp), int(key % n_comp)
        nbr.setdefault(i, []).append((int(cnt), j))
        nbr.setdefault(j, []).append((int(cnt), i))

    parent = np.arange(n_comp)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for c in np.argsort(sizes):  # smallest fragments first
        if keep[c]:
            continue
        for _, j in sorted(nbr.get(int(c), []), reverse=True):
            if find(j) != find(c):
                parent[find(c)] = find(j)
                break

    roots = np.array([find(c) for c in range(n_comp)])
    uniq_roots, new_ids = np.unique(roots, return_inverse=True)
    return new_ids[comp].astype(np.int32), len(uniq_roots)


def build_adjacency(seg: SegmentationMap) -> RegionAdjacency:
    """Edges between segments that share a 4-connected pixel boundary."""
    lbl = seg.labels
    edge_set = set()
    for a, b in ((lbl[:, :-1], lbl[:, 1:]), (lbl[:-1, :], lbl[1:, :])):
        m = a != b
        pa, pb = a[m].astype(np.int64), b[m].astype(np.int64)
        lo, hi = np.minimum(pa, pb), np.maximum(pa, pb)
        for key in np.unique(lo * seg.n_segments + hi):
            edge_set.add(frozenset((int(key // seg.n_segments), int(key % seg.n_segments))))
    neighbors = [[] for _ in range(seg.n_segments)]
    for e in edge_set:
        a, b = tuple(e)
        neighbors[a].append(b)
        neighbors[b].append(a)
    sizes = np.bincount(seg.labels.ravel(), minlength=seg.n_segments)
    return RegionAdjacency(
        seg.n_segments,
        frozenset(edge_set),
        tuple(tuple(sorted(n)) for n in neighbors),
        tuple(int(s) for s in sizes),
    )


def grow_region(
    seg: SegmentationMap,
    adj: RegionAdjacency,
    seed: int,
    target_size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Accrete whole superpixels around `seed` until >= target_size pixels.

    Frontier superpixels are visited in rng-shuffled breadth-first order;
    growth stops at the first superpixel whose inclusion reaches the target
    (so it may overshoot by up to one superpixel) or when the connected
    component is exhausted. Returns a binary float mask.
    """
    if not (0 <= seed < seg.n_segments):
        raise InvalidParameterError(f"seed {seed} outside [0, {seg.n_segments})")
    if target_size < 1:
        raise InvalidParameterError("target_size must be >= 1")
    if adj.segment_sizes:
        sizes = adj.segment_sizes
    else:
        sizes = np.bincount(seg.labels.ravel(), minlength=seg.n_segments)
    chosen = {seed}
    total = int(sizes[seed])
    frontier = list(adj.neighbors[seed])
    visited = {seed, *frontier}
    while total < target_size and frontier:
        pick = int(rng.integers(len(frontier)))
        nxt = frontier.pop(pick)
        chosen.add(nxt)
        total += int(sizes[nxt])
        for nb in adj.neighbors[nxt]:
            if nb not in visited:
                visited.add(nb)
                frontier.append(nb)
    sel = np.zeros(seg.n_segments, dtype=bool)
    sel[list(chosen)] = True
    return sel[seg.labels].astype(DTYPE)


def pick_occluder(
    stack: SegmentationStack,
    size_range: tuple[int, int],
    rng: np.random.Generator,
    adjacencies: tuple[RegionAdjacency, ...] | None = None,
) -> np.ndarray:
    """Sample granularity, target size, and seed, then grow an occluder mask.

    `adjacencies` lets callers reuse precomputed adjacency graphs (one per
    stack map, same order).
    """
    lo, hi = size_range
    if hi < lo or lo < 1:
        raise InvalidParameterError(f"bad size range {size_range}")
    k = int(rng.integers(len(stack.maps)))
    seg = stack.maps[k]
    m = int(rng.integers(lo, hi + 1))
    seed = int(rng.integers(seg.n_segments))
    adj = adjacencies[k] if adjacencies is not None else build_adjacency(seg)
    return grow_region(seg, adj, seed, m, rng)


def segment_stack(
    img, component_counts=(100, 1000), compactness: float = 10.0, iterations: int = 10
) -> SegmentationStack:
    """Segment one image at each granularity of `component_counts`."""
    counts = tuple(int(c) for c in component_counts)
    maps = tuple(slic_segment(img, c, compactness, iterations) for c in counts)
    return SegmentationStack(maps, counts)


# --- cache files ------------------------------------------------------------
# layout: 8-byte magic "SLICMAP1", then height/width/n_segments as little-
# endian int32, then zlib-compressed row-major little-endian int32 labels.


def write_segmentation_cache(seg: SegmentationMap, path) -> None:
    h, w = seg.shape
    payload = zlib.compress(seg.labels.astype("<i4").tobytes())
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(CACHE_MAGIC)
        f.write(struct.pack("<iii", h, w, seg.n_segments))
        f.write(payload)
    os.replace(tmp, path)


def read_segmentation_cache(path) -> SegmentationMap:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != CACHE_MAGIC:
            raise FlowFormatError(f"bad segmentation cache magic in {path}")
        header = f.read(12)
        if len(header) != 12:
            raise FlowFormatError(f"truncated segmentation cache {path}")
        h, w, n = struct.unpack("<iii", header)
        labels = np.frombuffer(zlib.decompress(f.read()), dtype="<i4")
    if labels.size != h * w:
        raise FlowFormatError(f"segmentation cache payload mismatch in {path}")
    return SegmentationMap(labels.reshape(h, w).astype(np.int32), n)


def image_content_key(img) -> str:
    """Stable content hash of an image, for cache file naming."""
    img = as_image(img)
    data = np.ascontiguousarray((img * 255).round().astype(np.uint8))
    return hashlib.sha1(data.tobytes() + str(img.shape).encode()).hexdigest()[:16]


def cached_segment_stack(
    img, component_counts=(100, 1000), cache_dir=None, **kwargs
) -> SegmentationStack:
    """segment_stack with an optional on-disk cache keyed by image content."""
    counts = tuple(int(c) for c in component_counts)
    if cache_dir is None:
        return segment_stack(img, counts, **kwargs)
    os.makedirs(cache_dir, exist_ok=True)
    key = image_content_key(img)
    maps = []
    for c in counts:
        path = os.path.join(cache_dir, f"{key}_{c}.slic")
        if os.path.exists(path):
            maps.append(read_segmentation_cache(path))
        else:
            seg = slic_segment(img, c, **kwargs)
            write_segmentation_cache(seg, path)
            maps.append(seg)
    return SegmentationStack(tuple(maps), counts)
