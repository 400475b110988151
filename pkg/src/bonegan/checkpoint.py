"""Checkpoint directory format.

A checkpoint is a directory holding ``manifest.json`` plus one little-endian
float32 binary blob per named array.  The manifest records the format
version, a config echo, the step counter, and the array index (name, file,
shape, element count), so a load can verify every blob's length before
touching tensor state.  Writes go to a temp directory that is atomically
renamed into place.
"""

import json
import os
import shutil
from pathlib import Path

import numpy as np

from .errors import CheckpointError

CHECKPOINT_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"


def save_arrays(out_dir, arrays, step, config_dict, extra=None):
    """Write arrays (dict name -> float32 ndarray) atomically to out_dir."""
    out_dir = Path(out_dir)
    tmp = out_dir.with_name(out_dir.name + ".tmp")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)

    index = []
    for i, (name, arr) in enumerate(sorted(arrays.items())):
        arr = np.asarray(arr, dtype=np.float32)
        fname = f"arr_{i:05d}.bin"
        with open(tmp / fname, "wb") as fh:
            fh.write(np.ascontiguousarray(arr).astype("<f4").tobytes())
        index.append({
            "name": name,
            "file": fname,
            "shape": list(arr.shape),
            "numel": int(arr.size),
        })
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "step": int(step),
        "config": config_dict,
        "arrays": index,
        "extra": extra or {},
    }
    with open(tmp / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)

    if out_dir.exists():
        shutil.rmtree(out_dir)
    os.replace(tmp, out_dir)
    return out_dir


def read_manifest(ckpt_dir):
    ckpt_dir = Path(ckpt_dir)
    mpath = ckpt_dir / MANIFEST_NAME
    if not mpath.exists():
        raise CheckpointError(f"checkpoint {ckpt_dir} has no {MANIFEST_NAME}")
    with open(mpath, encoding="utf-8") as fh:
        manifest = json.load(fh)
    version = manifest.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint {ckpt_dir} has format_version {version}, "
            f"this build reads {CHECKPOINT_FORMAT_VERSION}")
    return manifest


def load_arrays(ckpt_dir):
    """Read a checkpoint back; returns (arrays, manifest)."""
    ckpt_dir = Path(ckpt_dir)
    manifest = read_manifest(ckpt_dir)
    arrays = {}
    for entry in manifest["arrays"]:
        blob = ckpt_dir / entry["file"]
        if not blob.exists():
            raise CheckpointError(f"checkpoint blob {blob} (array {entry['name']}) is missing")
        raw = blob.read_bytes()
        expected = entry["numel"] * 4
        if len(raw) != expected:
            raise CheckpointError(
                f"checkpoint blob {blob} (array {entry['name']}) has {len(raw)} bytes, "
                f"expected {expected}")
        arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"])
        arrays[entry["name"]] = arr.copy()
    return arrays, manifest
