"""
Fluid limit and finite-N trajectories
=====================================

Integrate the fluid ODE from an empty system and compare it with JSQ(d)
simulations at growing N, where d = ceil(N**0.5).
"""
import numpy as np

from jsqd import Kind, PolicySpec, SimConfig, run_coupled
from jsqd import fluid as fl

lam, b, T = 0.9, 10, 10.0
ode = fl.integrate_fluid(np.zeros(b), lam, T, 1e-3)
print("ODE at t=10:", np.round(ode.at(T)[:3], 4), "fixed point:", fl.fixed_point(lam, 3))

# %%
# Sup l1 distance on the 0.1 snapshot grid shrinks as N grows.
for N in (500, 2000, 8000):
    d = int(np.ceil(N ** 0.5))
    run = run_coupled(SimConfig(N=N, lam=lam * N, b=b, T=T, seed=0, policies=[PolicySpec(Kind.JSQ_D, d=d)]))
    dist = np.abs(run.fluid(0) - ode.on_grid(run.times)).sum(axis=1).max()
    print(f"N={N:5d} d={d:3d} sup l1 = {dist:.4f}")

# %%
# Batch arrivals: the first coordinate relaxes as lam + (q1(0) - lam) e^{-t}.
t = np.linspace(0, 5, 6)
print(np.round(fl.batch_fluid_closed_form(0.0, 0.7, t)[:, 0], 4))
