# %% [markdown]
# # posevid walkthrough
#
# Synthetic stick-figure corpus, pose maps, a short two-stage training run, inference on wild poses,
# compositing and metrics. Runs on CPU in a few minutes at 32x32.

# %%
import matplotlib.pyplot as plt
import numpy as np
import torch

from posevid.datapipe import build_synthetic_dataset
from posevid.infer_compose import composite_background, generate_sequence
from posevid.metrics import evaluate_frames
from posevid.pose_core import BODY15, rasterize_pose_map
from posevid.trainer import TrainConfig, train_stage1, train_stage2

torch.set_num_threads(1)

# %% [markdown]
# ### Data
# One recorded subject (frames plus keypoints, split 17:3 by time) and a few keypoint-only wild clips.

# %%
ds = build_synthetic_dataset(seed=0, num_frames=60, resolution=(32, 32), num_unpaired=2, unpaired_frames=30)
clip = ds.train[0]
print(len(clip.frames), "train frames,", len(ds.val[0].frames), "val frames,", len(ds.unpaired), "wild clips")

fig, axes = plt.subplots(1, 4, figsize=(8, 2))
for ax, t in zip(axes, (0, 10, 20, 30)):
    ax.imshow(clip.frames[t])
    ax.set_title(f"t={t}")
    ax.axis("off")

# %% [markdown]
# ### Pose maps
# Each of the 14 channels draws one limb. Summing the channels shows the whole skeleton.

# %%
pose_map = rasterize_pose_map(clip.skeletons[10], BODY15, (32, 32))
plt.imshow(pose_map.data.sum(-1), cmap="gray")
plt.axis("off")

# %% [markdown]
# ### Training
# A tiny network and a few hundred steps: enough to see the figure appear, not enough to converge.

# %%
config = TrainConfig(steps=300, stage2_steps=100, base_width=16, num_downsamples=2, num_residual_blocks=2,
                     d_width=16, resolutions=((32, 32),))
stage1 = train_stage1(config, ds, rng_seed=0)
stage2 = train_stage2(config, ds, stage1, rng_seed=0)

losses = np.array([[r["step"], r["total_G"]] for r in stage1.history if r["branch"] == "paired"])
plt.plot(losses[:, 0], losses[:, 1])
plt.xlabel("step")
plt.ylabel("generator loss")

# %% [markdown]
# ### Inference on wild poses and compositing

# %%
wild = ds.unpaired[0]
frames = generate_sequence(wild, stage1, stage2, normalize=True)
background = np.zeros((32, 32, 3), np.float32)
background[..., 2] = np.linspace(0.3, 1.0, 32)[:, None]
composited = composite_background(frames, background)

fig, axes = plt.subplots(2, 4, figsize=(8, 4))
for i, t in enumerate((0, 8, 16, 24)):
    axes[0, i].imshow(frames[t])
    axes[1, i].imshow(composited[t])
    axes[0, i].axis("off")
    axes[1, i].axis("off")

# %% [markdown]
# ### Metrics on the held-out split

# %%
val = ds.val[0]
report = evaluate_frames(generate_sequence(val.skeletons, stage1, stage2), val.frames)
print(report.summary())
