"""
Growing occluders from superpixels
==================================

Occluders are unions of SLIC superpixels accreted around a random seed
segment until a target pixel count is reached, so their silhouettes follow
real image contours instead of looking like pasted polygons.
"""

import os

import numpy as np

from flowsynth.flowio import _write_png8
from flowsynth.pipeline import synthesize_texture
from flowsynth.segmentation import build_adjacency, grow_region, slic_segment

out_dir = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(out_dir, exist_ok=True)

img = synthesize_texture(256, 384, seed=21)
seg = slic_segment(img, 150)
print("requested 150 superpixels, got", seg.n_segments)

adj = build_adjacency(seg)
sizes = np.asarray(adj.segment_sizes)
print("superpixel area: min %d / median %d / max %d px"
      % (sizes.min(), int(np.median(sizes)), sizes.max()))

# paint superpixel boundaries onto the image
edges = np.zeros(seg.shape, bool)
edges[:, 1:] |= seg.labels[:, 1:] != seg.labels[:, :-1]
edges[1:, :] |= seg.labels[1:, :] != seg.labels[:-1, :]
overlay = img.copy()
overlay[edges] = (1.0, 0.0, 0.0)

# grow three occluders of increasing size from the same seed segment
rng = np.random.default_rng(3)
panels = [overlay]
for target in (2000, 6000, 18000):
    mask = grow_region(seg, adj, seed=40, target_size=target, rng=rng)
    print("target %5d px -> occluder of %5d px" % (target, int(mask.sum())))
    shaded = img * (0.3 + 0.7 * mask[:, :, None])  # highlight the mask
    panels.append(shaded)

_write_png8(np.concatenate(panels, axis=1), os.path.join(out_dir, "occluders.png"))
print("wrote", os.path.join(out_dir, "occluders.png"))
