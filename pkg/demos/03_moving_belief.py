"""
Accumulating evidence over frames
=================================

Each frame produces a moving probability for every tracked keypoint. A small
two-state Bayes filter turns the sequence into a belief that reacts quickly
but ignores a single odd frame.
"""

from dynakey.motion import FusedObservation, FusionRule, Source, bayes_update, classify

# %%
# A keypoint that starts static, then is carried away by a person.
observations = [0.05, 0.05, 0.1, 0.9, 0.9, 0.9, 0.3, 0.9]

bel = 0.1
for k, p in enumerate(observations):
    bel = bayes_update(bel, FusedObservation(p, FusionRule(Source.FUSED, 0.5)), epsilon=0.1)
    print(f"frame {k}: p_move = {p:.2f} -> bel = {bel:.3f} ({classify(bel).state.value})")
