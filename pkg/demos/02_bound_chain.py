"""
How tight are the convex upper bounds?
======================================

For a fixed contracting model the local robust identification error (RIE)
upper bounds a lifted, trajectory-wide bound, which in turn bounds the
linearized simulation error. When the model is affine in the state the
linearized error equals the true simulation error, so the chain bounds
what a user actually cares about.
"""

# %%
import numpy as np

from stable_sysid.benchmark import contraction_feasible_draw
from stable_sysid.objectives import eval_lifted_bound, eval_local_rie, j_ee, linearized_sim_error
from stable_sysid.simulate import simulation_error
from stable_sysid.synthetic import random_dataset, random_state_affine_model

rng = np.random.default_rng(1)

# %%
print(f"{'n':>2} {'T':>4} {'J_EE':>10} {'J0':>10} {'J0_L':>10} {'J0_V':>10}")
for _ in range(8):
    n = int(rng.integers(1, 4))
    params, data = contraction_feasible_draw(rng, n, 60)
    print(f"{n:2d} {data.T:4d} {j_ee(params, data):10.3g} {linearized_sim_error(params, data):10.3g} "
          f"{eval_lifted_bound(params, data):10.3g} {eval_local_rie(params, data):10.3g}")

# %%
# In the state-affine case J0 and the simulation error agree to rounding.
params = random_state_affine_model(rng, n=2)
data = random_dataset(rng, 2, 1, 1, 80)
print("J_se =", simulation_error(params, data))
print("J0   =", linearized_sim_error(params, data))
print("J0_V =", eval_local_rie(params, data))
