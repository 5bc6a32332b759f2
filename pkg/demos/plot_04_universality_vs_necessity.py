"""
When does JSQ(d) behave like JSQ on the diffusion scale?
========================================================

With d = N**0.85 the scaled length-2 count looks like JSQ's; with
d = N**0.4 its running maximum keeps growing with N.
"""
import numpy as np

from jsqd.experiments import coupled_diffusion_samples, ks_two_sample, parse_config

for rule in ("pow:0.85", "pow:0.4"):
    cfg = parse_config({"experiment": "diffusion-universality", "d_rule": rule, "replications": 200})
    print(f"d(N) = N^{rule[4:]}")
    for N in cfg.N_grid:
        final, sup2 = coupled_diffusion_samples(cfg, N)
        ks = ks_two_sample(final[:, 1, 1], final[:, 0, 1])
        print(f"  N={N:5d}  KS={ks:.3f}  median sup Q2: JSQ(d)={np.median(sup2[:, 1]):.2f} "
              f"JSQ={np.median(sup2[:, 0]):.2f}")
