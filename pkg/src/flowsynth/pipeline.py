"""Parallel dataset generation: seeding, worker pool, manifest writing.

Every sample is a pure function of (corpus, config, global seed, index):
the per-sample random stream is spawned from SeedSequence([seed, index]),
so 1-worker and N-worker runs produce byte-identical sample files.
"""

from __future__ import annotations

import dataclasses
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import flowio
from .augment import AugmentConfig, augment
from .flowio import ImageCorpus, append_manifest_record, write_manifest_header, write_sample
from .imaging import DTYPE
from .segmentation import cached_segment_stack
from .synthesis import SceneSample, SynthesisConfig, generate_sample

log = logging.getLogger("flowsynth")


@dataclass
class RunConfig:
    input_dir: str | None = None
    output_dir: str | None = None
    count: int = 1
    seed: int = 0
    workers: int = 1
    formats: tuple[str, ...] = ("flo",)
    cache_dir: str | None = None
    min_size: tuple[int, int] = (64, 64)
    target_size: tuple[int, int] | None = None
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    augmentation: AugmentConfig | None = None

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        return out


def sample_rng(global_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(global_seed), int(index)]))


def synthesize_texture(height: int, width: int, seed: int = 0) -> np.ndarray:
    """Smooth random RGB texture (used by bench and tests as a stand-in corpus)."""
    import cv2

    rng = np.random.default_rng(seed)
    img = rng.random((height // 4 + 2, width // 4 + 2, 3)).astype(DTYPE)
    img = cv2.resize(img, (width, height), interpolation=cv2.INTER_CUBIC)
    img = cv2.GaussianBlur(img, (0, 0), 1.5)
    lo, hi = img.min(), img.max()
    return ((img - lo) / max(hi - lo, 1e-6)).astype(DTYPE)


# per-process memo of segmentation stacks (and their adjacency graphs) so
# repeated samples from the same source only pay for segmentation once
_STACK_CACHE: dict = {}


def _stack_for(corpus: ImageCorpus, run: RunConfig, src_idx: int, source):
    key = (corpus.paths[src_idx], corpus.target_size,
           run.synthesis.component_counts, run.cache_dir)
    stack = _STACK_CACHE.get(key)
    if stack is None:
        stack = cached_segment_stack(
            source, run.synthesis.component_counts, cache_dir=run.cache_dir
        )
        if len(_STACK_CACHE) >= 16:
            _STACK_CACHE.clear()
        _STACK_CACHE[key] = stack
    return stack


def make_one_sample(corpus: ImageCorpus, run: RunConfig, index: int) -> SceneSample:
    """Generate (and optionally augment) sample `index` of a run."""
    rng = sample_rng(run.seed, index)
    n = len(corpus)
    src_idx = int(rng.integers(n))
    if n > 1:
        aux_idx = int(rng.integers(n - 1))
        if aux_idx >= src_idx:
            aux_idx += 1
    else:
        aux_idx = src_idx
    source = corpus.load(src_idx)
    aux = corpus.load(aux_idx)
    stack = _stack_for(corpus, run, src_idx, source)
    from .synthesis import draw_scene_params, realize_scene

    params = draw_scene_params(run.synthesis, stack, rng)
    sample = realize_scene(source, aux, params, run.synthesis)
    sample.provenance["seed"] = [int(run.seed), int(index)]
    sample.provenance["source"] = os.path.basename(corpus.paths[src_idx])
    sample.provenance["auxiliary"] = os.path.basename(corpus.paths[aux_idx])
    if run.augmentation is not None:
        sample = augment(sample, run.augmentation, rng)
    return sample


_WORKER: dict = {}


def _worker_init(run: RunConfig, paths, target_size):
    _WORKER["run"] = run
    _WORKER["corpus"] = ImageCorpus(paths, target_size)


def _worker_job(index: int) -> dict:
    run: RunConfig = _WORKER["run"]
    sample = make_one_sample(_WORKER["corpus"], run, index)
    return write_sample(sample, run.output_dir, f"{index:06d}", run.formats)


def run_generation(run: RunConfig, corpus: ImageCorpus | None = None) -> dict:
    """Generate `run.count` samples and write a manifest. Returns stats."""
    if corpus is None:
        corpus = flowio.ingest_images(run.input_dir, run.min_size, run.target_size)
    out_dir = Path(run.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.jsonl"
    write_manifest_header(manifest, run.as_dict())

    # warm the segmentation cache up front so workers never duplicate the
    # one expensive, cacheable step
    if run.cache_dir:
        for i in range(len(corpus)):
            cached_segment_stack(
                corpus.load(i), run.synthesis.component_counts, cache_dir=run.cache_dir
            )

    t0 = time.perf_counter()
    n_done = 0
    if run.workers <= 1:
        for index in range(run.count):
            sample = make_one_sample(corpus, run, index)
            record = write_sample(sample, run.output_dir, f"{index:06d}", run.formats)
            append_manifest_record(manifest, record)
            n_done += 1
    else:
        with ProcessPoolExecutor(
            max_workers=run.workers,
            initializer=_worker_init,
            initargs=(run, corpus.paths, run.target_size),
        ) as pool:
            for record in pool.map(_worker_job, range(run.count)):
                append_manifest_record(manifest, record)
                n_done += 1
    elapsed = time.perf_counter() - t0
    stats = {
        "samples": n_done,
        "seconds": elapsed,
        "samples_per_second": n_done / elapsed if elapsed > 0 else float("inf"),
        "manifest": str(manifest),
    }
    log.info("generated %d samples in %.1fs (%.2f/s)", n_done, elapsed,
             stats["samples_per_second"])
    return stats


def run_bench(
    height: int = 544,
    width: int = 1280,
    count: int = 10,
    seed: int = 0,
    corpus: ImageCorpus | None = None,
    synthesis: SynthesisConfig | None = None,
    augmentation: AugmentConfig | None = AugmentConfig(),
) -> dict:
    """Time in-memory sample generation (segmentation precomputed, no disk IO)."""
    import tempfile

    synthesis = synthesis or SynthesisConfig()
    run = RunConfig(count=count, seed=seed, synthesis=synthesis, augmentation=augmentation)
    with tempfile.TemporaryDirectory() as cache_dir:
        if corpus is None:
            import cv2

            paths = []
            for i in range(4):
                img = synthesize_texture(height, width, seed=1000 + i)
                p = os.path.join(cache_dir, f"tex{i}.png")
                cv2.imwrite(p, (img[..., ::-1] * 255).round().astype(np.uint8))
                paths.append(p)
            corpus = ImageCorpus(tuple(paths))
        run.cache_dir = os.path.join(cache_dir, "seg")
        t_pre = time.perf_counter()
        for i in range(len(corpus)):
            cached_segment_stack(corpus.load(i), synthesis.component_counts,
                                 cache_dir=run.cache_dir)
        precompute = time.perf_counter() - t_pre
        t0 = time.perf_counter()
        for index in range(count):
            make_one_sample(corpus, run, index)
        elapsed = time.perf_counter() - t0
    return {
        "height": height,
        "width": width,
        "samples": count,
        "segmentation_precompute_seconds": precompute,
        "seconds": elapsed,
        "samples_per_second": count / elapsed if elapsed > 0 else float("inf"),
    }
