"""Shared fixtures: deterministic textured images and small generated scenes."""

import numpy as np
import pytest

from flowsynth.pipeline import synthesize_texture
from flowsynth.segmentation import segment_stack


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def texture_pair():
    """Two smooth random textures, 128x160, values spanning [0, 1]."""
    return synthesize_texture(128, 160, seed=11), synthesize_texture(128, 160, seed=12)


@pytest.fixture(scope="session")
def small_stack(texture_pair):
    src, _ = texture_pair
    return segment_stack(src, component_counts=(20, 80))


def checkerboard(h, w, tile=4):
    """Binary checkerboard texture, useful when flat regions would hide errors."""
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return (((yy // tile) + (xx // tile)) % 2).astype(np.float32)[:, :, None]
