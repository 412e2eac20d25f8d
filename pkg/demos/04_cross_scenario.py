# Train on one channel scenario, test on another: the absorber walls break transfer.
# Run: python3 demos/04_cross_scenario.py   (about 1 minute on one core)
# %%
from pathlib import Path

import numpy as np

from gnssjam.dataio import desk_default_plan, synthesize_in_memory
from gnssjam.eval import Settings, svgplot
from gnssjam.eval.protocols import cross_scenario_matrix
from gnssjam.nnet import TrainConfig
from gnssjam.tasks import make_task

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)
scenarios = ("1a", "2", "8")

# %% None / Chirp / Multitone / Noise at 6 and 10 dBm, short snapshots
plan = desk_default_plan(count=30, n_t=8)
plan["rows"] = [r for r in plan["rows"] if r["scenario"] in scenarios]
ds = synthesize_in_memory(plan, seed=0)

# %% rows = training scenario, columns = test scenario
s = Settings(train=TrainConfig(epochs=15), reps=1, scenarios=scenarios)
mean, _ = cross_scenario_matrix(ds, [make_task("type")], s)
np.set_printoptions(precision=1, suppress=True)
print("train \\ test", scenarios)
for name, row in zip(scenarios, mean):
    print(f"{name:>11s}", row)
(out / "cross_scenario.svg").write_text(svgplot.heatmap(mean, list(scenarios), list(scenarios),
                                                        title="type accuracy (%)", vmin=0, vmax=100,
                                                        xlabel="test scenario", ylabel="train scenario"))
