"""
Recovering a model from its own data
====================================

A contracting planar cubic model generates input/output data with its
state recorded alongside. Because the model lies inside the polynomial
basis, a local-RIE fit under a sum-of-squares contraction constraint
should drive every slack to zero and reproduce the data in simulation.
"""

# %%
import numpy as np

from stable_sysid.fit import FitConfig, fit_dataset
from stable_sysid.synthetic import model_dataset, planar_cubic_model, smooth_input

rng = np.random.default_rng(0)
truth = planar_cubic_model()
train = model_dataset(truth, smooth_input(rng, 200, 1))
valid = model_dataset(truth, smooth_input(rng, 200, 1))
print(f"training set: T = {train.T}, n = {train.n}, m = {train.m}, p = {train.p}")

# %%
# lag = 0 tells the pipeline the data already carries state columns.
config = FitConfig(lag=0, deg_e=3, objective_mode="LocalRIE", constraint_mode="SOS")
report = fit_dataset(config, train, valid)
print(f"solver status: {report.status}, certificate: {report.certificate_label}")
print(f"sum of slacks: {report.slack_sum:.2e}")

# %%
# Every fidelity measure on the training set. The bounds are ordered
# J0 <= J0_L <= J0_V; all of them vanish when the model is exact.
for key, value in report.train.items():
    print(f"  {key:7s} {value:.3e}")
print(f"validation J_perf: {report.validation['J_perf']:.2e} %")

# %%
# The fit lives in normalized coordinates, so its coefficients match the
# generator only after undoing the scaling; the simulated outputs are what
# agree directly. The certificate is rechecked on random samples of a box
# slightly larger than the data.
print("worst sampled contraction eigenvalue:", report.certificate["worst_min_eig"])
print("samples checked:", report.certificate["num_samples"])
