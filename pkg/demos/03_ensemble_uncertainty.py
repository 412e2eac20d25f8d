# Train a small deep ensemble and split its uncertainty into aleatoric and epistemic parts.
# Run: python3 demos/03_ensemble_uncertainty.py   (about 4 minutes on one core)
# %%
from pathlib import Path

import numpy as np

from gnssjam.dataio import category_plan, synthesize_in_memory
from gnssjam.eval import SplitSpec, accuracy, confusion_matrix, make_split, svgplot
from gnssjam.nnet import TrainConfig, train
from gnssjam.siggen import Category
from gnssjam.tasks import labels_for, make_task
from gnssjam.uncert import conditioned_maps, ensemble_predict, member_seeds

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)

# %% 60 snapshots per category in the heavily absorbed scenario 8, 16 FFT windows each
ds = synthesize_in_memory(category_plan(scenarios=("8",), count=60, n_t=16), seed=0)
tr, te = make_split(ds, SplitSpec(seed=0))
task = make_task("type")
print(len(tr), "training and", len(te), "test snapshots")

# %% five members that differ only in their initialisation seed
cfg = TrainConfig(epochs=20, seed=0)
seeds = member_seeds(0, 5)
members = [train(tr.grids, labels_for([task], tr), [task.head()], cfg, init_seed=s)[0] for s in seeds]
batch = ensemble_predict(members, te.grids, "type", seeds)
truth = te["category"]
print(f"ensemble accuracy {accuracy(batch.predictions, truth):.1f}%")

# %% uncertainty per sample: trace of each covariance
rep = batch.report()
ale = np.trace(rep.aleatoric, axis1=1, axis2=2)
epi = np.trace(rep.epistemic, axis1=1, axis2=2)
wrong = batch.predictions != truth
print(f"mean aleatoric {ale.mean():.3f}  epistemic {epi.mean():.4f}")
print(f"epistemic on wrong predictions {epi[wrong].mean() if wrong.any() else 0:.4f} "
      f"vs right {epi[~wrong].mean():.4f}")

# %% maps conditioned on (true, predicted) class
labels = [c.label for c in Category]
maps = conditioned_maps(truth, batch.predictions, rep, 7)
for name, m in maps.items():
    (out / f"{name}.svg").write_text(svgplot.heatmap(m, labels, labels, title=name, fmt="{:.3f}",
                                                     xlabel="predicted", ylabel="true"))
cm = confusion_matrix(batch.predictions, truth, 7)
(out / "ensemble_confusion.svg").write_text(svgplot.confusion_svg(cm, labels, title="scenario 8 ensemble"))
print("maps written to", out)
