"""Flow evaluation (EPE, F1-all) and the photometric self-validation oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyEvaluationError, InvalidDimensionError
from .imaging import bilinear_sample, make_identity_grid
from .synthesis import SceneSample

RULE_KITTI = "kitti"  # outlier iff epe > 3 px AND epe > 5% of |gt|
RULE_PROSE = "prose"  # outlier iff epe > 3 px OR  epe > 5% of |gt|


def _endpoint_errors(pred, gt, valid):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 3 or pred.shape[2] != 2:
        raise InvalidDimensionError(f"flow shape mismatch: {pred.shape} vs {gt.shape}")
    if valid is None:
        sel = np.ones(pred.shape[:2], bool)
    else:
        sel = np.asarray(valid, dtype=np.float64) >= 0.5
        if sel.shape != pred.shape[:2]:
            raise InvalidDimensionError("valid mask shape mismatch")
    if not sel.any():
        raise EmptyEvaluationError("no valid pixels to evaluate")
    err = np.sqrt(np.sum((pred - gt) ** 2, axis=-1))
    return err, np.sqrt(np.sum(gt ** 2, axis=-1)), sel


def epe(pred, gt, valid=None) -> float:
    """Mean Euclidean endpoint error over valid pixels."""
    err, _, sel = _endpoint_errors(pred, gt, valid)
    return float(err[sel].mean())


def f1_all(pred, gt, valid=None, rule: str = RULE_KITTI) -> float:
    """Outlier percentage. The default follows the official KITTI
    definition (error above 3 px and above 5% of the ground-truth
    magnitude); `rule="prose"` switches the conjunction to a disjunction.
    """
    err, mag, sel = _endpoint_errors(pred, gt, valid)
    big = err > 3.0
    rel = err > 0.05 * mag
    if rule == RULE_KITTI:
        outlier = big & rel
    elif rule == RULE_PROSE:
        outlier = big | rel
    else:
        raise ValueError(f"unknown outlier rule: {rule}")
    return float(100.0 * outlier[sel].mean())


@dataclass
class PhotometricAudit:
    mean_abs_diff: float
    p99_abs_diff: float
    occlusion_fraction: float
    n_evaluated: int
    flow_magnitude_hist: tuple = field(default=(), repr=False)
    mean_threshold: float = 0.02
    p99_threshold: float = 0.1

    @property
    def passed(self) -> bool:
        return (self.mean_abs_diff <= self.mean_threshold
                and self.p99_abs_diff <= self.p99_threshold)


def photometric_audit(
    sample: SceneSample,
    mean_threshold: float = 0.02,
    p99_threshold: float = 0.1,
) -> PhotometricAudit:
    """Warp frame1 backward by the flow and compare against frame0.

    Pixels flagged occluded or touched by any shadow matte are excluded;
    the remainder must match up to resampling error if the flow is exact.
    """
    h, w = sample.shape
    grid = make_identity_grid(h, w) + sample.flow
    warped = bilinear_sample(sample.frame1, grid, border="clamp")
    diff = np.abs(warped.astype(np.float64) - sample.frame0).mean(axis=-1)
    excluded = (sample.occlusion >= 0.5) | (sample.shadow_region > 1e-3)
    sel = ~excluded
    mag = np.sqrt(np.sum(np.asarray(sample.flow, np.float64) ** 2, axis=-1))
    hist = np.histogram(mag, bins=16)
    n = int(sel.sum())
    if n == 0:
        mean_diff, p99 = 0.0, 0.0
    else:
        mean_diff = float(diff[sel].mean())
        p99 = float(np.percentile(diff[sel], 99.0))
    return PhotometricAudit(
        mean_abs_diff=mean_diff,
        p99_abs_diff=p99,
        occlusion_fraction=float((sample.occlusion >= 0.5).mean()),
        n_evaluated=n,
        flow_magnitude_hist=(hist[0].tolist(), hist[1].tolist()),
        mean_threshold=mean_threshold,
        p99_threshold=p99_threshold,
    )


@dataclass
class EvalReport:
    epe_mean: float
    f1_all: float
    n_valid: int
    per_sample: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "epe_mean": self.epe_mean,
            "f1_all": self.f1_all,
            "n_valid": self.n_valid,
            "per_sample": self.per_sample,
        }


def evaluate_pairs(pairs, rule: str = RULE_KITTI) -> EvalReport:
    """Aggregate EPE/F1-all over (name, pred, gt, valid) tuples.

    Aggregation is pixel-weighted so it is independent of how samples are
    split or ordered.
    """
    per_sample = []
    err_sum = 0.0
    outlier_sum = 0.0
    n_total = 0
    for name, pred, gt, valid in pairs:
        err, mag, sel = _endpoint_errors(pred, gt, valid)
        e = err[sel]
        m = mag[sel]
        big = e > 3.0
        rel = e > 0.05 * m
        outlier = (big & rel) if rule == RULE_KITTI else (big | rel)
        per_sample.append({
            "name": name,
            "epe": float(e.mean()),
            "f1_all": float(100.0 * outlier.mean()),
            "n_valid": int(e.size),
        })
        err_sum += float(e.sum())
        outlier_sum += float(outlier.sum())
        n_total += int(e.size)
    if n_total == 0:
        raise EmptyEvaluationError("no valid pixels across all samples")
    return EvalReport(
        epe_mean=err_sum / n_total,
        f1_all=100.0 * outlier_sum / n_total,
        n_valid=n_total,
        per_sample=per_sample,
    )
