# %% [markdown]
# # Ablation ladder
#
# Trains the five configurations from PL-Stage1 to PL-UL-Stage2 and scores each one on perturbed
# validation poses (dropped parts, jitter, limb rescaling). The defaults here are small, so expect a
# coarse ordering only. The acceptance suite runs the same harness with a larger budget.

# %%
import matplotlib.pyplot as plt
import torch

from posevid.ablation import run_ablation
from posevid.datapipe import build_synthetic_dataset
from posevid.trainer import ABLATIONS, TrainConfig

torch.set_num_threads(1)

# %%
for name, flags in ABLATIONS.items():
    print(f"{name:16s}", flags)

# %%
ds = build_synthetic_dataset(seed=0, num_frames=120, resolution=(32, 32), num_unpaired=2, unpaired_frames=40)
base = TrainConfig(steps=300, stage2_steps=150, base_width=16, num_downsamples=2, num_residual_blocks=2,
                   d_width=16, resolutions=((32, 32),))
reports = run_ablation(ds, base, seed=0, out_dir="ablation_run")

# %%
names = list(reports)
fig, (a, b) = plt.subplots(1, 2, figsize=(10, 3))
a.bar(names, [reports[n].ssim_mean for n in names])
a.set_title("validation SSIM")
b.bar(names, [reports[n].fid for n in names])
b.set_title("validation FID")
for ax in (a, b):
    ax.tick_params(axis="x", rotation=30)
