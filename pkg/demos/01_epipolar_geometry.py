"""
Epipolar lines and reprojection error
=====================================

Two cameras look at the same points. A static point seen in the first view
must land on its epipolar line in the second one; a moving point drifts off.
"""

import numpy as np

from dynakey import CameraIntrinsics, PoseSE3, epipolar_line, estimate_fundamental_ransac, fundamental_from_poses, reprojection_error
from dynakey.geometry import project_many

# %%
# A TUM-like camera that moves 10 cm to the right between two frames.
K = CameraIntrinsics(535.4, 539.2, 320.1, 247.6)
prev_pose = PoseSE3.identity()
cur_pose = PoseSE3((0, 0, 0, 1), (0.10, 0.0, 0.0))

rng = np.random.default_rng(0)
points = np.column_stack([rng.uniform(-2, 2, 40), rng.uniform(-1.5, 1.5, 40), rng.uniform(2, 6, 40)])
q, _ = project_many(K, prev_pose, points)
p, _ = project_many(K, cur_pose, points)

# %%
# F follows from the relative pose. Static correspondences sit on their lines.
F = fundamental_from_poses(K, prev_pose, cur_pose)
errors = [reprojection_error(F, a, b) for a, b in zip(q, p)]
print(f"static points: max distance to epipolar line {max(errors):.2e} px")

# %%
# Move one point 3 px along the line's normal, as if it walked away.
line = epipolar_line(F, q[0])
normal = np.array([line.X, line.Y]) / np.hypot(line.X, line.Y)
moved = p[0] + 3.0 * normal
print(f"moved point: {reprojection_error(F, q[0], moved):.3f} px off its line")

# %%
# Without poses, RANSAC recovers the same F from the matches alone.
matches = np.stack([q, p], axis=1)
F_est, inliers = estimate_fundamental_ransac(matches, seed=1, iterations=300)
gap = np.linalg.norm(F_est.normalized().m - F.normalized().m)
print(f"RANSAC: {inliers.sum()}/{len(inliers)} inliers, |F_est - F| = {gap:.1e}")
