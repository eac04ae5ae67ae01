"""
Scoring a trajectory
====================

Absolute trajectory error after rigid alignment, relative pose error per
frame, and the improvement over a baseline run.
"""

import numpy as np

from dynakey.dataset import StampedPose
from dynakey.evaluation import evaluate, format_table


def noisy(gt, sigma, seed):
    rng = np.random.default_rng(seed)
    out = []
    for p in gt:
        q = np.array([*rng.normal(scale=sigma, size=3), 1.0])
        t = np.add(p.translation, rng.normal(scale=sigma, size=3))
        out.append(StampedPose(p.timestamp, tuple(t), tuple(q / np.linalg.norm(q))))
    return out


# %%
# A gentle arc as ground truth, a good estimate and a worse baseline.
s = np.linspace(0, 1, 60)
gt = [StampedPose(1.0 + k / 30, (float(np.sin(v)), 0.0, float(1 - np.cos(v))), (0.0, 0.0, 0.0, 1.0))
      for k, v in enumerate(s)]
ours = noisy(gt, 0.003, 1)
baseline = noisy(gt, 0.02, 2)

report = evaluate(ours, gt, baseline, sequence="arc")
print(format_table([report]))
print(report.to_json())
