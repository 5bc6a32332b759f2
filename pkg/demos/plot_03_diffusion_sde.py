"""
Reflected diffusion in the Halfin-Whitt regime
==============================================

Euler-Maruyama with projection at zero. The reflection term only grows when
the idle-server coordinate sits at the boundary.
"""
import numpy as np

from jsqd.diffusion import DiffusionParams, complementarity_audit, linear_ode_solution, simulate_sde

params = DiffusionParams(beta=1.0, k=2, T=5.0, h=1e-3, seed=3)
s = simulate_sde(params, reps=500, record_paths=True)
print("terminal means:", np.round(s.X.mean(axis=0), 3))
print("quantiles of X2(T):", np.round(np.quantile(s.X[:, 1], [0.1, 0.5, 0.9]), 3))
print("complementarity:", complementarity_audit(s.dU, s.X1_after))

# %%
# Without noise and away from the boundary the system is linear.
z = simulate_sde(params, reps=1, x0=[-1.0, 1.0], noise=False, record_paths=True)
x, y = linear_ode_solution(1.0, -1.0, 1.0, z.times)
print("max error vs closed form:", np.abs(z.paths[:, 0, 0] - x).max())
