"""
Objects carried by people
=========================

A held object is not part of the person's mask, and its own matches may look
static for a while. The interaction rule flips such points when moving
neighbours at a similar depth surround them.
"""

import numpy as np

from dynakey.motion import Provenance, State
from dynakey.pipeline import RunParams, run_sequence
from dynakey.scene import entity_kinds, generate_scene, oim_config

cfg = oim_config(seed=7)
seq = generate_scene(cfg)
carried = np.flatnonzero(entity_kinds(cfg) == 2)

# %%
# Run once with the rule and once without it.
for use_oim in (True, False):
    frames = run_sequence(seq, RunParams(use_oim=use_oim))
    hits = total = flips = 0
    for f, fr in zip(seq.frames[1:], frames[1:]):
        for r in fr.results:
            if f.keypoints.point_id[r.index] in carried and not r.observation.in_mask:
                total += 1
                hits += r.state.state is State.DYNAMIC
                flips += r.state.provenance is Provenance.OIM
    print(f"interaction rule {'on ' if use_oim else 'off'}: {hits}/{total} carried-object observations dynamic, "
          f"{flips} by the rule")
