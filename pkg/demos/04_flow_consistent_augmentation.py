"""
Augmentation that keeps the ground truth valid
==============================================

Every geometric transform is applied to frames, masks, and flow together:
flips negate the matching flow component, rescaling scales the vectors,
crops and erasures turn lost correspondences into occlusions. The
photometric audit still passes afterwards.
"""

import numpy as np

from flowsynth.augment import AugmentConfig, augment, crop, flip, scale
from flowsynth.metrics import photometric_audit
from flowsynth.pipeline import synthesize_texture
from flowsynth.segmentation import segment_stack
from flowsynth.synthesis import SynthesisConfig, generate_sample

source = synthesize_texture(384, 512, seed=11)
aux = synthesize_texture(384, 512, seed=12)
stack = segment_stack(source, component_counts=(100, 1000))
sample = generate_sample(source, aux, stack, SynthesisConfig(), seed=4)

# individual transforms
flipped = flip(sample, horizontal=True)
print("flip: mean u before %+.2f, after %+.2f"
      % (sample.flow[..., 0].mean(), flipped.flow[..., 0].mean()))

halved = scale(sample, 0.5)
print("scale 0.5: shape %s -> %s, flow magnitude halves (%.2f -> %.2f)"
      % (sample.shape, halved.shape,
         np.abs(sample.flow).mean(), np.abs(halved.flow).mean()))

cropped = crop(sample, (64, 64), (256, 384))
gained = (cropped.occlusion >= 0.5).mean() - (sample.occlusion >= 0.5).mean()
print("crop: occluded fraction grows by %.3f (targets leaving the window)" % gained)

# the full randomized chain, geometry only (photometric jitter deliberately
# breaks brightness constancy between the frames -- that is its job)
config = AugmentConfig(
    brightness=0.0, contrast=0.0, saturation=0.0, hue=0.0,
    scale_range=(0.8, 1.2), crop_size=(256, 384), erase_prob=1.0,
)
for seed in range(3):
    out = augment(sample, config, np.random.default_rng(seed))
    audit = photometric_audit(out, p99_threshold=0.15)
    print("chain seed %d: applied %s -> audit %s"
          % (seed, sorted(out.provenance["augment"]),
             "pass" if audit.passed else "FAIL"))
