"""Shared helpers for the test suite.

Most tests need a trackable image: band-limited noise with enough contrast
that window gradients clear the minimum-eigenvalue floor at every pyramid
level. Single-pixel noise aliases when decimated, and periodic patterns let
the tracker lock onto the wrong period, so everything here is smoothed
Gaussian noise rescaled to a wide intensity range.
"""

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter, shift as nd_shift


def textured(height, width, seed=0, sigma=2.0):
    """uint8 test image: full-contrast band-limited noise."""
    rng = np.random.default_rng(seed)
    n = gaussian_filter(rng.standard_normal((height, width)), sigma)
    n = (n - n.min()) / (n.max() - n.min())
    return np.rint(20 + 215 * n).astype(np.uint8)


def textured_rgb(height, width, seed=0, sigma=2.0):
    g = textured(height, width, seed, sigma)
    return np.stack([g, g, g], axis=-1)


def shifted(img, dx, dy):
    """img translated by (dx, dy); border pixels replicate.

    Content at (x, y) in the output came from (x - dx, y - dy), i.e. a point
    at p in img appears at p + (dx, dy) — the convention LK reports.
    """
    out = nd_shift(img.astype(np.float64), (dy, dx), order=1, mode="nearest")
    return np.rint(out).astype(np.uint8)


def interior_margin(flow_params, max_shift):
    """Pixels near the border are unreliable: the replicate-border stripe of a
    shifted image corrupts coarse-level windows up to roughly
    window * 2**(levels-1) + |shift| pixels in."""
    return flow_params.window * 2 ** (flow_params.levels - 1) + int(np.ceil(max_shift))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
