"""Age progression and regression with a measurable outcome.

Reuses (or retrains) the micro model from demo 02, takes held-out young
phantoms, re-generates them under older labels, and measures the gap width
before and after.  An 8-year shift is two 4-year bins.
"""

import subprocess
import sys
from pathlib import Path

import numpy as np
import torch

from bonegan.config import desk_train_config
from bonegan.data import load_dataset
from bonegan.metrics import measure_gap_width, progress_image
from bonegan.trainer import load_model_from_checkpoint

torch.set_num_threads(2)
HERE = Path(__file__).parent
OUT = HERE / "_out" / "03"
OUT.mkdir(parents=True, exist_ok=True)

ckpt = HERE / "_out" / "02" / "run" / "checkpoints" / "final"
if not ckpt.exists():
    print("running demo 02 first to get a checkpoint ...")
    subprocess.run([sys.executable, str(HERE / "02_train_and_reconstruct.py")], check=True)

model, _cfg = load_model_from_checkpoint(ckpt)
dataset = load_dataset(HERE / "_out" / "02" / "dataset" / "manifest.csv",
                       model.cfg.image_size)

bins = dataset.bins["test"]
young = np.flatnonzero(bins == 0)[:8]
x = dataset.images["test"][young]
print(f"progressing {len(young)} bin-0 phantoms by +8 years (2 bins):")
shifted, target = progress_image(model, x, source_bin=0, delta_years=8)
for i, (before, after) in enumerate(zip(x, shifted)):
    print(f"  phantom {i}: gap {measure_gap_width(before)}px -> {measure_gap_width(after)}px")

old = np.flatnonzero(bins == 4)[:8]
if len(old):
    x_old = dataset.images["test"][old]
    back, target = progress_image(model, x_old, source_bin=4, delta_years=-8)
    gaps = [measure_gap_width(im) for im in back]
    print(f"regressing {len(old)} bin-4 (fused) phantoms by -8 years: "
          f"gaps reopen to {gaps}")

# shifting past the ends is a range error, never a clamp
try:
    progress_image(model, x, source_bin=4, delta_years=8)
except Exception as exc:
    print(f"bin 4 + 8y -> {type(exc).__name__}: {exc}")
