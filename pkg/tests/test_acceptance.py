"""Acceptance suite: one test per release criterion, tolerances pinned.

Each test prints a single PASS line on success (run with -s or look at the
verbose test report); scales and thresholds are fixed here on purpose, do
not loosen them to make a regression green.
"""

import numpy as np
import pytest
from scipy.stats import chisquare

from flowsynth.augment import flip, scale
from flowsynth.flowio import read_flo, read_kitti_png, read_manifest, write_flo, write_kitti_png
from flowsynth.imaging import DTYPE, bilinear_sample, make_identity_grid
from flowsynth.metrics import epe, f1_all, photometric_audit
from flowsynth.pipeline import RunConfig, run_bench, run_generation, synthesize_texture
from flowsynth.segmentation import segment_stack
from flowsynth.synthesis import (
    OPAQUE,
    BackgroundSpec,
    LayerSpec,
    SceneSample,
    SynthesisConfig,
    composite_scene,
    draw_scene_params,
    generate_sample,
    realize_scene,
    synthesize_background,
    synthesize_foreground,
)
from flowsynth.tps import (
    ControlGrid,
    fit_tps,
    identity_warp,
    evaluate_warp,
    sample_control_grid,
    _lattice,
)

from test_augment import make_sample


@pytest.fixture(scope="module")
def corpus_384():
    """Four textured 384x512 sources with their segmentation stacks."""
    images = [synthesize_texture(384, 512, seed=900 + i) for i in range(4)]
    stacks = [segment_stack(img, component_counts=(100, 1000)) for img in images]
    return images, stacks


def test_ground_truth_exactness(corpus_384):
    """>= 200 samples at the default configuration: the photometric audit
    (mean <= 0.02, p99 <= 0.1 outside occlusion/shadow) passes for 100%."""
    images, stacks = corpus_384
    config = SynthesisConfig()
    failures = []
    for k in range(200):
        i = k % len(images)
        sample = generate_sample(
            images[i], images[(i + 1) % len(images)], stacks[i], config, seed=k
        )
        audit = photometric_audit(sample)
        if not audit.passed:
            failures.append((k, audit.mean_abs_diff, audit.p99_abs_diff))
    assert not failures, failures
    print("PASS ground-truth exactness: 200/200 samples within mean<=0.02 p99<=0.1")


def test_tps_correctness():
    """1000 random control grids: exact-interpolation residual <= 1e-4 px,
    affine targets leave kernel weights below 1e-6."""
    rng = np.random.default_rng(77)
    worst_interp = 0.0
    worst_affine = 0.0
    for k in range(1000):
        L = int(rng.integers(3, 6))
        grid = sample_control_grid(544, 1280, L, 25.0, rng)
        warp = fit_tps(grid, regularization=0.0)
        err = np.abs(evaluate_warp(warp, grid.source_points) - grid.target_points).max()
        worst_interp = max(worst_interp, float(err))

        src = _lattice(544, 1280, L)
        A = np.eye(2) + rng.normal(0, 0.1, (2, 2))
        b = rng.normal(0, 20.0, 2)
        aff = fit_tps(ControlGrid(L, src, src @ A.T + b))
        worst_affine = max(worst_affine, float(np.abs(aff.kernel_weights).max()))
    assert worst_interp <= 1e-4, worst_interp
    assert worst_affine < 1e-6, worst_affine
    print(f"PASS tps correctness: interp residual {worst_interp:.2e} px, "
          f"affine |w|_inf {worst_affine:.2e} over 1000 grids")


def test_flow_composition_delta_regression():
    """A layer placed at p0=(0,0) / p1=(20,0): dropping the placement shift
    delta from the composed flow (the uncorrected composition formula)
    must fail the photometric oracle; the shipped flow must pass."""
    img = synthesize_texture(96, 160, seed=31)
    h, w = img.shape[:2]
    mask = np.zeros((h, w), DTYPE)
    mask[16:80, 20:100] = 1.0
    ident = (identity_warp(h, w), identity_warp(h, w))
    bg = synthesize_background(img, BackgroundSpec(ident, (0.0, 0.0)))
    layer = synthesize_foreground(img, LayerSpec(mask, OPAQUE, 0.5, ident, (0, 0), (20, 0), 0))
    sample = composite_scene(bg, [layer])
    assert photometric_audit(sample).passed

    owned = mask >= 0.5
    literal_flow = sample.flow.copy()
    literal_flow[owned] -= np.array([20.0, 0.0], DTYPE)
    literal = SceneSample(sample.frame0, sample.frame1, literal_flow,
                          sample.occlusion, sample.shadow_region)
    audit = photometric_audit(literal)
    assert not audit.passed, audit
    print(f"PASS delta regression: literal composition mean diff "
          f"{audit.mean_abs_diff:.3f} (fails), corrected flow passes")


def test_shadow_invariance():
    """50 scenes with shadow_prob=1: shadows never perturb the flow, so the
    full flow field is bit-equal to the background-only flow."""
    img = synthesize_texture(128, 160, seed=50)
    aux = synthesize_texture(128, 160, seed=51)
    stack = segment_stack(img, component_counts=(20, 80))
    config = SynthesisConfig(
        shadow_prob=1.0, n_layers_range=(2, 5),
        occluder_size_range=(300, 2000), component_counts=(20, 80),
    )
    for seed in range(50):
        rng = np.random.default_rng(seed)
        params = draw_scene_params(config, stack, rng)
        assert all(lp.shadow for lp in params.layers)
        shadowed = realize_scene(img, aux, params, config)
        params.layers = []
        background_only = realize_scene(img, aux, params, config)
        assert np.array_equal(shadowed.flow, background_only.flow), seed
    print("PASS shadow invariance: 50/50 scenes bit-equal to background flow")


def test_distribution_conformance():
    """10,000 parameter draws at defaults match the published sampling
    distributions: N uniform on {8..14}, m in {6000..50000}, control noise
    std 25 +- 1, shift std 30 +- 1, shadow rate 0.20 +- 0.02."""
    config = SynthesisConfig()
    rng = np.random.default_rng(123)
    n_values, sizes, shifts, shadows = [], [], [], []
    for _ in range(10_000):
        params = draw_scene_params(config, None, rng, with_masks=False)
        n_values.append(params.n_layers)
        shifts.extend(params.bg_shift)
        for lp in params.layers:
            sizes.append(lp.target_size)
            shifts.extend(lp.shift)
            shadows.append(lp.shadow)

    counts = np.bincount(n_values, minlength=15)[8:15]
    assert counts.sum() == 10_000  # every draw lands in {8..14}
    p = chisquare(counts).pvalue
    assert p > 0.01, p

    sizes = np.asarray(sizes)
    assert sizes.min() >= 6000 and sizes.max() <= 50_000

    # layer shifts are rounded to integers, which adds variance 1/12 (<0.01 px
    # of std) - well inside the +-1 tolerance
    shift_std = float(np.asarray(shifts, np.float64).std())
    assert abs(shift_std - 30.0) <= 1.0, shift_std

    shadow_rate = float(np.mean(shadows))
    assert abs(shadow_rate - 0.20) <= 0.02, shadow_rate

    noise = []
    for _ in range(10_000):
        g = sample_control_grid(544, 1280, 3, config.control_noise_sigma, rng)
        noise.append(g.target_points - g.source_points)
    noise_std = float(np.concatenate(noise).std())
    assert abs(noise_std - 25.0) <= 1.0, noise_std
    print(f"PASS distribution conformance: chi2 p={p:.3f}, shift std {shift_std:.2f}, "
          f"noise std {noise_std:.2f}, shadow rate {shadow_rate:.3f}")


def test_metrics_against_scalar_oracle():
    """EPE/F1-all equal a per-pixel scalar recomputation to 1e-6 on 100
    random 32x32 fields; the constant (3,4) offset gives EPE exactly 5."""
    rng = np.random.default_rng(5)
    for _ in range(100):
        pred = rng.normal(0, 8, (32, 32, 2))
        gt = rng.normal(0, 8, (32, 32, 2))
        errs, outliers = [], []
        for y in range(32):
            for x in range(32):
                e = float(np.hypot(pred[y, x, 0] - gt[y, x, 0],
                                   pred[y, x, 1] - gt[y, x, 1]))
                m = float(np.hypot(gt[y, x, 0], gt[y, x, 1]))
                errs.append(e)
                outliers.append(e > 3.0 and e > 0.05 * m)
        assert abs(epe(pred, gt) - np.mean(errs)) <= 1e-6
        assert abs(f1_all(pred, gt) - 100.0 * np.mean(outliers)) <= 1e-6

    gt = np.zeros((16, 16, 2), DTYPE)
    pred = gt + np.array([3.0, 4.0], DTYPE)
    assert epe(pred, gt) == 5.0
    print("PASS metrics oracle: 100 fixtures match to 1e-6, offset fixture EPE == 5.0")


def test_format_round_trips(tmp_path):
    """.flo round trips bit-identically; KITTI PNG quantization error stays
    below 1/128 px; both over 100 random flows."""
    rng = np.random.default_rng(9)
    worst_kitti = 0.0
    for k in range(100):
        flow = rng.normal(0, 60, (17, 23, 2)).astype(np.float32)
        np.clip(flow, -400, 400, out=flow)
        fpath = tmp_path / f"{k}.flo"
        write_flo(flow, fpath)
        assert np.array_equal(read_flo(fpath), flow)
        kpath = tmp_path / f"{k}.png"
        write_kitti_png(flow, None, kpath)
        back, valid = read_kitti_png(kpath)
        assert np.all(valid == 1.0)
        worst_kitti = max(worst_kitti, float(np.abs(back - flow).max()))
    assert worst_kitti <= 1.0 / 128.0, worst_kitti
    print(f"PASS format round trips: .flo bit-identical, KITTI max err "
          f"{worst_kitti:.5f} px over 100 flows")


def test_determinism_across_worker_counts(tmp_path):
    """The same corpus/config/seed yields byte-identical sample files with
    1 and 8 workers (manifest record order excepted)."""
    import cv2

    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    for i in range(3):
        tex = synthesize_texture(96, 128, seed=70 + i)
        cv2.imwrite(str(img_dir / f"t{i}.png"),
                    (tex[..., ::-1] * 255).round().astype(np.uint8))
    synthesis = SynthesisConfig(
        n_layers_range=(2, 4), occluder_size_range=(300, 1500),
        component_counts=(15, 60),
    )
    outputs = {}
    for workers in (1, 8):
        out = tmp_path / f"w{workers}"
        run = RunConfig(input_dir=str(img_dir), output_dir=str(out), count=8,
                        seed=5, workers=workers, formats=("flo", "kitti"),
                        synthesis=synthesis)
        run_generation(run)
        outputs[workers] = out

    names = sorted(p.name for p in outputs[1].iterdir() if p.name != "manifest.jsonl")
    assert sorted(p.name for p in outputs[8].iterdir()
                  if p.name != "manifest.jsonl") == names
    for name in names:
        a = (outputs[1] / name).read_bytes()
        b = (outputs[8] / name).read_bytes()
        assert a == b, name
    _, rec1 = read_manifest(outputs[1] / "manifest.jsonl")
    _, rec8 = read_manifest(outputs[8] / "manifest.jsonl")
    key = lambda r: r["id"]
    assert sorted(rec1, key=key) == sorted(rec8, key=key)
    print(f"PASS determinism: {len(names)} files byte-identical across 1 and 8 workers")


def test_throughput():
    """bench reports >= 2 samples/s/core at 1280x544 with the default
    configuration (segmentation precomputed and cached, as in a real run)."""
    stats = run_bench(height=544, width=1280, count=10, seed=0)
    rate = stats["samples_per_second"]
    assert rate >= 2.0, stats
    print(f"PASS throughput: {rate:.2f} samples/s at 1280x544 "
          f"({stats['samples']} samples in {stats['seconds']:.1f}s)")


def test_augmentation_involutions():
    """On 100 random samples: flip twice is bit-exact, scale f then 1/f
    returns the flow within 0.1 px mean, crop/erase only add occlusions."""
    from flowsynth.augment import crop, erase

    factors = (0.5, 0.8, 1.25, 2.0)
    for k in range(100):
        rng = np.random.default_rng(1000 + k)
        # knot spacing 32 px mirrors the smoothness of generated flow
        # (control lattices sit hundreds of pixels apart at full resolution)
        s = make_sample(rng, h=64, w=80, spacing=32)

        hf, vf = bool(rng.integers(2)), bool(rng.integers(2))
        back = flip(flip(s, hf, vf), hf, vf)
        for name in ("frame0", "frame1", "flow", "occlusion", "shadow_region"):
            assert np.array_equal(getattr(back, name), getattr(s, name)), name

        f = factors[k % 4]
        rescaled = scale(scale(s, f), 1.0 / f)
        assert rescaled.shape == s.shape
        assert np.abs(rescaled.flow - s.flow).mean() <= 0.1

        cropped = crop(s, (8, 10), (40, 60))
        before = s.occlusion[8:48, 10:70] >= 0.5
        assert np.all((cropped.occlusion >= 0.5)[before])

        erased = erase(s, (16, 20, 12, 16))
        assert np.all(erased.occlusion >= s.occlusion)
    print("PASS augmentation involutions: flip bit-exact, scale round trip "
          "<= 0.1 px, crop/erase monotone on 100 samples")
