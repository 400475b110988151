"""Micro training run.

Trains the full model (age discriminator + label smoothing + self-attention)
for a few hundred steps at 32x32 on a small phantom set: enough to watch the
reconstruction term collapse and to see age-invariant reconstructions take
shape.  The desk-scale acceptance experiment is the same thing at 64x64,
2000 steps, 500 phantoms (about 10 CPU-minutes; see README).
"""

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import torch

from bonegan.config import desk_train_config
from bonegan.data import load_dataset
from bonegan.metrics import age_invariant_reconstruct
from bonegan.phantom import write_phantom_dataset
from bonegan.trainer import train

torch.set_num_threads(2)
OUT = Path(__file__).parent / "_out" / "02"
OUT.mkdir(parents=True, exist_ok=True)

manifest = write_phantom_dataset(OUT / "dataset", n=120, size=32, seed=2)
cfg = desk_train_config(steps=300, batch_size=16, checkpoint_period=150, log_period=5, seed=0)
cfg.model.image_size = 32
cfg.model.base_channels = 8
dataset = load_dataset(manifest, cfg.model.image_size)

print(f"training {cfg.model.variant_name()} for {cfg.steps} steps at 32x32 ...")
state, final = train(cfg, dataset, OUT / "run")
print(f"final checkpoint: {final}")

# the reconstruction component should have fallen by an order of magnitude
with open(OUT / "run" / "metrics.csv") as fh:
    rows = list(csv.DictReader(fh))
steps = [int(r["step"]) for r in rows]
recon = [float(r["recon"]) for r in rows]
acc = [float(r["age_val_acc"]) for r in rows if r["age_val_acc"]]
print(f"recon: first {recon[0]:.4f} -> last {recon[-1]:.4f}; "
      f"age-head val accuracy {acc[-1]:.2f}")

fig, ax = plt.subplots(figsize=(6, 3.5))
ax.plot(steps, recon)
ax.set_xlabel("step")
ax.set_ylabel("reconstruction term")
ax.set_yscale("log")
fig.savefig(OUT / "recon_curve.png", dpi=110, bbox_inches="tight")

# show input vs age-invariant reconstruction for a few held-out phantoms
x = dataset.images["test"][:6]
recon_imgs = age_invariant_reconstruct(state.model, x, dataset.labels("test")[:6])
fig, axes = plt.subplots(2, 6, figsize=(14, 5))
for col in range(6):
    axes[0, col].imshow(x[col, 0], cmap="gray", vmin=-1, vmax=1)
    axes[1, col].imshow(recon_imgs[col, 0], cmap="gray", vmin=-1, vmax=1)
    axes[0, col].axis("off")
    axes[1, col].axis("off")
axes[0, 0].set_title("real", loc="left")
axes[1, 0].set_title("reconstruction", loc="left")
fig.savefig(OUT / "reconstructions.png", dpi=110, bbox_inches="tight")
print(f"wrote {OUT / 'recon_curve.png'} and {OUT / 'reconstructions.png'}")
