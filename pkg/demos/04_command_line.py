"""
The ``sysid`` command line from Python
======================================

Writes an output-history dataset and a config file into a scratch folder,
then fits, simulates and validates through the same entry point the
``sysid`` script uses.
"""

# %%
import json
import pathlib
import tempfile

import numpy as np

from stable_sysid.cli import main
from stable_sysid.dataio import save_csv
from stable_sysid.synthetic import WienerSystem, smooth_input

work = pathlib.Path(tempfile.mkdtemp(prefix="sysid-demo-"))
system = WienerSystem.default()
rng = np.random.default_rng(2)
for name in ("train", "valid"):
    u = smooth_input(rng, 300, 1, 0.4)
    save_csv(work / f"{name}.csv", u, system.run(u))

# %%
config = work / "fit.cfg"
config.write_text(f"""\
# data and model files
data = {work / 'train.csv'}
validation_data = {work / 'valid.csv'}
model = {work / 'out' / 'model.txt'}
# surrogate state: two past outputs, two past inputs
lag = 2
input_lag = 2
deg_e = 3
deg_fx = 2
deg_gx = 2
objective_mode = LocalRIE
constraint_mode = SOS
""")

# %%
code = main(["fit", "--config", str(config), "--out", str(work / "out")])
print("fit exit code", code)
report = json.loads((work / "out" / "fit_report.json").read_text())
print("validation J_perf:", report["validation"]["J_perf"])

# %%
print("simulate exit code", main(["simulate", "--config", str(config), "--out", str(work / "out")]))
print("validate exit code", main(["validate", "--config", str(config), "--out", str(work / "out")]))
print("outputs in", work / "out")
