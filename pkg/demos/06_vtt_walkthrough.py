"""Scripted visual-Turing-test session against the real HTTP service.

Creates a realism session over a phantom dataset and a micro checkpoint,
answers every trial through the JSON API exactly as the browser UI would,
and prints the Table-2-style report.  Ground truth never appears in any
client payload; scoring happens server-side from the append-only log.

To rate images yourself:  bonegan vtt-serve --store S --data-root D \
    --checkpoint-root C --ui frontend/dist   then open
    http://127.0.0.1:8000/?session=<id>
"""

import subprocess
import sys
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from bonegan.vtt_http import VttServiceConfig, create_app

HERE = Path(__file__).parent
OUT = HERE / "_out" / "06"
OUT.mkdir(parents=True, exist_ok=True)

ckpt = HERE / "_out" / "02" / "run" / "checkpoints" / "final"
dataset_dir = HERE / "_out" / "02" / "dataset"
if not ckpt.exists():
    print("running demo 02 first to get a checkpoint ...")
    subprocess.run([sys.executable, str(HERE / "02_train_and_reconstruct.py")], check=True)

# service roots: datasets under data_root/<tag>/, checkpoints under
# checkpoint_root/<tag>/
data_root = OUT / "data"
ckpt_root = OUT / "ckpts"
(data_root / "phantoms").symlink_to(dataset_dir) if not (data_root / "phantoms").exists() \
    else None
ckpt_root.mkdir(parents=True, exist_ok=True)
if not (ckpt_root / "bapgan").exists():
    (ckpt_root / "bapgan").symlink_to(ckpt, target_is_directory=True)

client = TestClient(create_app(VttServiceConfig(
    store_root=str(OUT / "store"), data_root=str(data_root),
    checkpoint_root=str(ckpt_root))))

created = client.post("/sessions", json={
    "kind": "realism", "model_tag": "bapgan", "dataset_tag": "phantoms",
    "n_real": 10, "n_synthetic": 10, "shuffle_seed": 42}).json()
sid = created["session_id"]
print(f"session {sid}: {created['n_trials']} trials")

rng = np.random.default_rng(0)
while True:
    nxt = client.get(f"/sessions/{sid}/next").json()
    if nxt.get("done"):
        break
    assert set(nxt) == {"trial_id", "image_url"}  # nothing else ever leaks
    png = client.get(nxt["image_url"]).content  # the rater would look at this
    answer = "real" if rng.random() < 0.5 else "synthetic"
    client.post(f"/sessions/{sid}/responses",
                json={"trial_id": nxt["trial_id"], "answer": answer})

report = client.get(f"/sessions/{sid}/report").json()
print("report (guessing rater, expect ~50% accuracy):")
for col in ("accuracy", "r_as_r", "r_as_s", "s_as_r", "s_as_s"):
    print(f"  {col:10s} {report[col]}%")
