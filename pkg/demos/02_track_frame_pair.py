"""
Corners, optical flow, and a robust affine on one frame pair
============================================================

The propagation inner loop, spelled out by hand: pick Shi-Tomasi corners on
the tool in frame A, chase them into frame B with pyramidal Lucas-Kanade,
then fit an affine transform with RANSAC and compare it to the scripted
truth.
"""

import tempfile

import numpy as np

from maskprop import pnm
from maskprop.features import CornerParams, corners_to_array, good_features
from maskprop.geometry import Correspondences, RansacParams, ransac_affine
from maskprop.images import build_pyramid, to_grayscale
from maskprop.optflow import FlowParams, lk_track_arrays
from maskprop.synth import SynthScript, affine_at, synth_sequence

# two frames, 4 frames of motion apart
script = SynthScript(width=480, height=360, frames=8,
                     translate_per_frame=(2.0, 1.0), rotate_per_frame_deg=0.5)
frames_dir, masks_dir, _ = synth_sequence(script, seed=5, out_dir=tempfile.mkdtemp())
frame_a = pnm.read_ppm(frames_dir / "000000.ppm")
frame_b = pnm.read_ppm(frames_dir / "000004.ppm")
mask_a = pnm.read_mask(masks_dir / "000000.pgm")

# corners come from the tool only; fg_erosion keeps them a few pixels off the
# mask boundary, where the tracking window would otherwise straddle tool and
# background moving differently
gray_a = to_grayscale(frame_a)
gray_b = to_grayscale(frame_b)
corners = good_features(gray_a, mask_a, CornerParams(min_distance=6.0, fg_erosion=4))
print(f"{len(corners)} corners on the tool")

flow = FlowParams()  # 21x21 window, 3 pyramid levels
pyr_a = build_pyramid(gray_a, flow.levels, min_dim=flow.window)
pyr_b = build_pyramid(gray_b, flow.levels, min_dim=flow.window)
src = corners_to_array(corners)
dst, tracked, residual = lk_track_arrays(pyr_a, pyr_b, src, flow)
print(f"{tracked.sum()} of {len(src)} tracked, "
      f"mean residual {residual[tracked].mean():.2f} gray levels")

# RANSAC shrugs off any corner that latched onto the background
pairs = Correspondences.of(src[tracked], dst[tracked])
T, inliers = ransac_affine(pairs, RansacParams(seed=0, min_inliers=8))
print(f"{inliers.sum()} inliers")

# the scripted truth for this pair is affine_at(4) composed with the inverse
# of affine_at(0) (here affine_at(0) is the identity)
truth = affine_at(script, 4)
print(f"estimated t = ({T.t[0]:+.3f}, {T.t[1]:+.3f})")
print(f"true      t = ({truth.t[0]:+.3f}, {truth.t[1]:+.3f})")
assert np.abs(T.A - truth.A).max() < 0.02
assert np.abs(T.t - truth.t).max() < 1.0
print("estimate matches the scripted motion")
