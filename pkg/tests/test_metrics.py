"""Endpoint error, outlier rates, and the photometric self-check."""

import numpy as np
import pytest

from flowsynth.errors import EmptyEvaluationError, InvalidDimensionError
from flowsynth.imaging import DTYPE
from flowsynth.metrics import (
    RULE_KITTI,
    RULE_PROSE,
    epe,
    evaluate_pairs,
    f1_all,
    photometric_audit,
)
from flowsynth.synthesis import BackgroundSpec, SceneSample, composite_scene, synthesize_background
from flowsynth.tps import identity_warp


def const_flow(h, w, u, v):
    f = np.zeros((h, w, 2), DTYPE)
    f[..., 0] = u
    f[..., 1] = v
    return f


def test_epe_identical_flows_is_zero(rng):
    f = rng.normal(0, 10, (16, 16, 2)).astype(DTYPE)
    assert epe(f, f) == 0.0


def test_epe_constant_offset_is_its_norm():
    gt = const_flow(8, 8, 0.0, 0.0)
    pred = const_flow(8, 8, 3.0, 4.0)
    assert epe(pred, gt) == 5.0


def test_epe_matches_scalar_oracle(rng):
    pred = rng.normal(0, 5, (12, 9, 2))
    gt = rng.normal(0, 5, (12, 9, 2))
    valid = (rng.random((12, 9)) > 0.3).astype(DTYPE)
    acc, n = 0.0, 0
    for y in range(12):
        for x in range(9):
            if valid[y, x] >= 0.5:
                du = pred[y, x, 0] - gt[y, x, 0]
                dv = pred[y, x, 1] - gt[y, x, 1]
                acc += float(np.hypot(du, dv))
                n += 1
    assert abs(epe(pred, gt, valid) - acc / n) < 1e-9


def test_f1_conjunction_vs_disjunction():
    # |gt| = 100 px, error 4 px: above 3 px but only 4% of the magnitude,
    # so the KITTI rule (AND) sees no outliers while the OR rule sees all
    gt = const_flow(10, 10, 100.0, 0.0)
    pred = const_flow(10, 10, 104.0, 0.0)
    assert f1_all(pred, gt, rule=RULE_KITTI) == 0.0
    assert f1_all(pred, gt, rule=RULE_PROSE) == 100.0


def test_f1_small_magnitude_outlier():
    # |gt| = 10 px, error 4 px: above 3 px and above 5% -> outlier either way
    gt = const_flow(10, 10, 10.0, 0.0)
    pred = const_flow(10, 10, 14.0, 0.0)
    assert f1_all(pred, gt, rule=RULE_KITTI) == 100.0
    assert f1_all(pred, gt, rule=RULE_PROSE) == 100.0


def test_f1_matches_scalar_oracle(rng):
    pred = rng.normal(0, 8, (14, 11, 2))
    gt = rng.normal(0, 8, (14, 11, 2))
    out, n = 0, 0
    for y in range(14):
        for x in range(11):
            err = float(np.hypot(*(pred[y, x] - gt[y, x])))
            mag = float(np.hypot(*gt[y, x]))
            out += int(err > 3.0 and err > 0.05 * mag)
            n += 1
    assert abs(f1_all(pred, gt) - 100.0 * out / n) < 1e-9


def test_empty_valid_mask_raises(rng):
    f = rng.normal(0, 1, (8, 8, 2))
    with pytest.raises(EmptyEvaluationError):
        epe(f, f, valid=np.zeros((8, 8), DTYPE))


def test_shape_mismatch_raises(rng):
    with pytest.raises(InvalidDimensionError):
        epe(np.zeros((4, 4, 2)), np.zeros((4, 5, 2)))
    with pytest.raises(InvalidDimensionError):
        epe(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)))


def identity_sample(img):
    h, w = img.shape[:2]
    z = np.zeros((h, w), DTYPE)
    return SceneSample(img, img.copy(), np.zeros((h, w, 2), DTYPE), z, z.copy())


def test_audit_identity_sample_is_exact(texture_pair):
    img, _ = texture_pair
    audit = photometric_audit(identity_sample(img))
    assert audit.mean_abs_diff == 0.0
    assert audit.p99_abs_diff == 0.0
    assert audit.passed
    assert audit.occlusion_fraction == 0.0
    assert audit.n_evaluated == img.shape[0] * img.shape[1]


def test_audit_translation_only_scene(texture_pair):
    # a pure-translation scene resamples at integer offsets only, so the
    # warp-back residual is essentially zero
    img, _ = texture_pair
    h, w = img.shape[:2]
    bg = synthesize_background(
        img, BackgroundSpec((identity_warp(h, w), identity_warp(h, w)), (7.0, -3.0))
    )
    sample = composite_scene(bg, [])
    audit = photometric_audit(sample)
    assert audit.mean_abs_diff <= 0.005
    assert audit.passed


def test_audit_detects_wrong_flow(texture_pair):
    img, _ = texture_pair
    h, w = img.shape[:2]
    sample = identity_sample(img)
    sample.flow[..., 0] = 15.0  # claims motion that never happened
    audit = photometric_audit(sample)
    assert not audit.passed


def test_audit_excludes_occluded_and_shadowed(texture_pair):
    img, _ = texture_pair
    h, w = img.shape[:2]
    sample = identity_sample(img)
    sample.frame1[:20] = 0.0          # corrupt a stripe...
    sample.occlusion[:20] = 1.0       # ...but flag it occluded
    sample.frame1[-20:] = 0.0
    sample.shadow_region[-20:] = 1.0  # ...or shadowed
    audit = photometric_audit(sample)
    assert audit.mean_abs_diff == 0.0
    assert audit.occlusion_fraction == pytest.approx(20 / h)
    assert audit.n_evaluated == (h - 40) * w


def test_audit_histogram_covers_all_pixels(texture_pair):
    img, _ = texture_pair
    audit = photometric_audit(identity_sample(img))
    counts, edges = audit.flow_magnitude_hist
    assert len(counts) == 16
    assert len(edges) == 17
    assert sum(counts) == img.shape[0] * img.shape[1]


def test_evaluate_pairs_is_pixel_weighted(rng):
    pred_a = rng.normal(0, 6, (10, 10, 2))
    gt_a = rng.normal(0, 6, (10, 10, 2))
    pred_b = rng.normal(0, 6, (30, 10, 2))
    gt_b = rng.normal(0, 6, (30, 10, 2))
    report = evaluate_pairs([
        ("a", pred_a, gt_a, None),
        ("b", pred_b, gt_b, None),
    ])
    joined = evaluate_pairs([
        ("ab", np.concatenate([pred_a, pred_b]), np.concatenate([gt_a, gt_b]), None)
    ])
    assert report.epe_mean == pytest.approx(joined.epe_mean, abs=1e-12)
    assert report.f1_all == pytest.approx(joined.f1_all, abs=1e-12)
    assert report.n_valid == 400
    assert [r["name"] for r in report.per_sample] == ["a", "b"]


def test_evaluate_pairs_empty_raises():
    with pytest.raises(EmptyEvaluationError):
        evaluate_pairs([])
