"""
How far inside a mask is a keypoint?
====================================

Segmentation masks are least trustworthy near their edges. The signed
distance to the nearest edge, scaled by a depth-dependent factor, gives the
probability that a keypoint belongs to the moving person.
"""

import numpy as np

from dynakey import MaskImage, beta, build_distance_field, semantic_moving_probability
from dynakey.masks import uncertain_half_width

# %%
# A person-shaped rectangle in a small image.
ids = np.zeros((120, 160), dtype=np.int32)
ids[20:110, 60:100] = 1
field = build_distance_field(MaskImage(ids))

# %%
# Walk along a row from outside the mask to its centre.
print(" u   dist   P(z=1m)  P(z=8m)")
for u in (40, 50, 56, 60, 64, 70, 79):
    d = field.at((u, 65))
    p1 = semantic_moving_probability(d, 1.0)
    p8 = semantic_moving_probability(d, 8.0)
    print(f"{u:3d} {d:6.1f}   {p1.value:.3f}    {p8.value:.3f}  ({p8.zone.value})")

# %%
# The band where the mask is not trusted narrows with depth.
for z in (0.0, 2.0, 5.0, 10.0):
    print(f"z = {z:4.1f} m: beta = {beta(z):.2f}, uncertain band +-{uncertain_half_width(z):.1f} px")
