"""
Four ways to pick tracking points
=================================

The query point can be tracked alone, or expanded into a small set of points
on the plate. Crosshairs needs nothing but the click; random and k-medoid
sampling first segment frame 0 and pick pixels from the mask.
"""

import numpy as np

from plateshot import pointselect, synthgen
from plateshot.segment import RegionGrowSegmenter

scene = synthgen.generate_scene(synthgen.SceneConfig(seed=1, frames=1))
q = scene.query
frame0 = scene.video[0]

print("single    ", pointselect.select_single(q).points)
print("crosshairs", pointselect.select_crosshairs(q, offset_px=8, per_arm=1,
                                                  frame_dims=frame0.dims).points)

# the bootstrap mask covers the whole plate, glyphs included
mask = pointselect.bootstrap_mask(frame0, q, RegionGrowSegmenter())
print("mask area", mask.area, "score", mask.score)

print("random    ", pointselect.select_random(mask, k=5, seed=0, query=q).points)
km = pointselect.select_kmedoids(mask, k=5)
print("k-medoids ", km.points)

# k-medoids spreads the points so every mask pixel is close to one of them
fg = np.column_stack(np.nonzero(mask.bits)[::-1]).astype(float)
medoids = np.array(km.points)
fg_and_medoids = np.vstack([fg, medoids])
cost = pointselect.medoid_cost(fg_and_medoids, range(len(fg), len(fg_and_medoids)))
print("mean distance to nearest medoid: %.2f px" % (cost / len(fg_and_medoids)))
