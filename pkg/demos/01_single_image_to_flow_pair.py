"""
From one still image to a training pair with exact optical flow
================================================================

The core trick: cut superpixel-shaped occluders out of a single image,
paint them over a warped copy of the background, and track every pixel
analytically while doing it. The result is two frames plus a flow field
that is correct by construction.
"""

import os

import numpy as np

from flowsynth.flowio import colorize_flow, write_flo, _write_png8
from flowsynth.pipeline import synthesize_texture
from flowsynth.segmentation import segment_stack
from flowsynth.synthesis import SynthesisConfig, generate_sample

out_dir = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(out_dir, exist_ok=True)

# any RGB image in [0, 1] works here; we synthesize one so the demo has no
# inputs. The auxiliary image donates texture for inpainted holes.
source = synthesize_texture(384, 512, seed=1)
aux = synthesize_texture(384, 512, seed=2)

# superpixel maps at two granularities; occluders are grown from these
stack = segment_stack(source, component_counts=(100, 1000))

sample = generate_sample(source, aux, stack, SynthesisConfig(), seed=0)

print("frames:", sample.frame0.shape, "flow:", sample.flow.shape)
print("occluded fraction: %.3f" % (sample.occlusion >= 0.5).mean())
print("flow magnitude p99: %.1f px"
      % np.percentile(np.linalg.norm(sample.flow, axis=-1), 99))

# side-by-side: frame 0 | frame 1 | color-wheel rendering of the flow
montage = np.concatenate(
    [sample.frame0, sample.frame1, colorize_flow(sample.flow)], axis=1
)
_write_png8(montage, os.path.join(out_dir, "pair_montage.png"))
write_flo(sample.flow, os.path.join(out_dir, "pair_flow.flo"))
print("wrote", os.path.join(out_dir, "pair_montage.png"))
