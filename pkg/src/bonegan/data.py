"""Dataset ingestion, age binning, preprocessing and augmentation.

Manifest format: UTF-8 CSV with header ``path,age_years,split,dataset_tag``;
the split column may be omitted, in which case `split_dataset` assigns one.
Relative image paths are resolved against the manifest's directory.
"""

import csv
import hashlib
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import AgeRangeError, ConfigurationError, IngestionError

BIN_WIDTH_YEARS = 4
SPLITS = ("train", "val", "test")


@dataclass
class SampleRecord:
    image_path: str
    age_years: float
    split: str
    dataset_tag: str


def bin_age(age_years, num_bins=5):
    """Map an age in years to its 4-year interval index ([0-3] -> 0, ...)."""
    if age_years < 0:
        raise AgeRangeError(f"age {age_years} is negative")
    idx = int(math.floor(age_years / BIN_WIDTH_YEARS))
    if idx >= num_bins:
        raise AgeRangeError(
            f"age {age_years} beyond the last interval "
            f"[{(num_bins - 1) * BIN_WIDTH_YEARS}-{num_bins * BIN_WIDTH_YEARS - 1}]")
    return idx


def bin_midpoint_age(bin_index):
    return bin_index * BIN_WIDTH_YEARS + (BIN_WIDTH_YEARS - 1) / 2


def one_hot(bins, num_bins=5):
    bins = np.asarray(bins, dtype=np.int64)
    out = np.zeros((bins.shape[0], num_bins), dtype=np.float32)
    out[np.arange(bins.shape[0]), bins] = 1.0
    return out


def load_manifest(path, num_bins=5, check_files=True):
    """Parse a manifest CSV into validated records (paths resolved)."""
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"manifest {path} does not exist")
    records = []
    seen_paths = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"path", "age_years", "dataset_tag"}
        fields = set(reader.fieldnames or ())
        if not required <= fields:
            raise IngestionError(
                f"{path}: header must include {sorted(required)}, got {reader.fieldnames}")
        has_split = "split" in fields
        for lineno, row in enumerate(reader, start=2):
            try:
                age = float(row["age_years"])
            except (TypeError, ValueError):
                raise IngestionError(f"{path}:{lineno}: bad age_years {row.get('age_years')!r}")
            try:
                bin_age(age, num_bins)
            except AgeRangeError as exc:
                raise IngestionError(f"{path}:{lineno}: {exc}") from exc
            split = (row.get("split") or "").strip() if has_split else ""
            if split and split not in SPLITS:
                raise IngestionError(f"{path}:{lineno}: unknown split {split!r}")
            img = Path(row["path"])
            if not img.is_absolute():
                img = path.parent / img
            if check_files and not img.exists():
                raise IngestionError(f"{path}:{lineno}: image file {img} not found")
            key = str(img)
            if key in seen_paths:
                warnings.warn(f"{path}:{lineno}: duplicate image path {key} (both kept)")
            seen_paths.add(key)
            records.append(SampleRecord(str(img), age, split, row["dataset_tag"]))
    return records


def split_dataset(records, ratios=(0.7, 0.1, 0.2), seed=0):
    """Deterministic shuffled partition into train/val/test.

    The first two splits get floor(n * ratio) records, the last the
    remainder, so 317 records at (0.704, 0.101, 0.195) give 223/32/62.
    """
    if not records:
        raise IngestionError("cannot split an empty record list")
    if len(ratios) != len(SPLITS):
        raise ConfigurationError(f"need {len(SPLITS)} ratios, got {len(ratios)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError(f"ratios must sum to 1, got {ratios}")
    order = np.random.default_rng(seed).permutation(len(records))
    n = len(records)
    counts = [int(math.floor(n * r)) for r in ratios[:-1]]
    counts.append(n - sum(counts))
    out = {}
    start = 0
    for name, count in zip(SPLITS, counts):
        out[name] = [records[i] for i in order[start:start + count]]
        start += count
    return out


def preprocess(raw, size):
    """Bilinear-resize a [0, 255] grayscale image to size x size and map it
    to [-1, 1] via v / 127.5 - 1."""
    arr = np.asarray(raw, dtype=np.float32)
    if arr.ndim != 2 or arr.size == 0:
        raise IngestionError(f"expected a non-empty 2-D grayscale image, got shape {arr.shape}")
    if arr.shape != (size, size):
        img = Image.fromarray(arr, mode="F")
        arr = np.asarray(img.resize((size, size), Image.BILINEAR), dtype=np.float32)
    return arr / 127.5 - 1.0


def load_image(path, size):
    with Image.open(path) as img:
        return preprocess(np.asarray(img.convert("L"), dtype=np.float32), size)


# ---------------------------------------------------------------------------
# augmentation: a +-5 degree rotation followed by two color operations drawn
# without replacement from the five-op pool

def _auto_contrast(img, _magnitude):
    lo, hi = float(img.min()), float(img.max())
    if hi - lo < 1e-12:
        return img
    return (img - lo) / (hi - lo) * 2.0 - 1.0


def _contrast(img, factor):
    mean = float(img.mean())
    return mean + factor * (img - mean)


def _brightness(img, factor):
    # multiplicative on the [0, 1] scale
    return ((img + 1.0) * 0.5 * factor) * 2.0 - 1.0


_SMOOTH_KERNEL = np.array([[1, 1, 1], [1, 5, 1], [1, 1, 1]], dtype=np.float64) / 13.0


def _sharpness(img, factor):
    blurred = ndimage.convolve(img, _SMOOTH_KERNEL, mode="nearest")
    return blurred + factor * (img - blurred)


def _posterize(img, bits):
    q = 2 ** (8 - int(bits))
    v = (img + 1.0) * 127.5
    return np.floor(v / q) * q / 127.5 - 1.0


COLOR_OPS = {
    "auto-contrast": _auto_contrast,
    "contrast": _contrast,
    "brightness": _brightness,
    "sharpness": _sharpness,
    "posterize": _posterize,
}


def apply_color_op(img, name, magnitude):
    if name not in COLOR_OPS:
        raise ConfigurationError(f"unknown color op {name!r}; pool is {sorted(COLOR_OPS)}")
    out = COLOR_OPS[name](np.asarray(img, dtype=np.float32), magnitude)
    return np.clip(out.astype(np.float32), -1.0, 1.0)


def rotate_image(img, angle_degrees):
    if angle_degrees == 0.0:
        return np.asarray(img, dtype=np.float32).copy()
    out = ndimage.rotate(img, angle_degrees, reshape=False, order=1,
                         mode="constant", cval=-1.0)
    return np.clip(out.astype(np.float32), -1.0, 1.0)


def _draw_magnitude(rng, name):
    if name == "posterize":
        return int(rng.integers(4, 8))
    if name == "auto-contrast":
        return 0.0
    return float(rng.uniform(0.7, 1.3))


def augment(img, seed):
    """Seeded augmentation of one [-1, 1] image: rotation then two distinct
    color ops with mild magnitudes."""
    rng = np.random.default_rng(seed)
    out = rotate_image(img, float(rng.uniform(-5.0, 5.0)))
    names = sorted(COLOR_OPS)
    for idx in rng.choice(len(names), size=2, replace=False):
        name = names[idx]
        out = apply_color_op(out, name, _draw_magnitude(rng, name))
    return out


def augmentation_seed(global_seed, epoch, sample_index):
    """Stable per-sample seed so parallel loading stays order-independent."""
    digest = hashlib.blake2b(
        f"{global_seed}/{epoch}/{sample_index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


# ---------------------------------------------------------------------------

class BoneDataset:
    """All splits of a manifest loaded into memory as [-1, 1] arrays."""

    def __init__(self, records, image_size, num_bins=5):
        self.image_size = image_size
        self.num_bins = num_bins
        self.records = {name: [] for name in SPLITS}
        for rec in records:
            if rec.split not in SPLITS:
                raise IngestionError(
                    f"record {rec.image_path} has no split; run split_dataset first")
            self.records[rec.split].append(rec)
        self.images = {}
        self.bins = {}
        for name in SPLITS:
            recs = self.records[name]
            if recs:
                imgs = np.stack([load_image(r.image_path, image_size) for r in recs])
                self.images[name] = imgs[:, None, :, :].astype(np.float32)
                self.bins[name] = np.array(
                    [bin_age(r.age_years, num_bins) for r in recs], dtype=np.int64)
            else:
                self.images[name] = np.zeros((0, 1, image_size, image_size), np.float32)
                self.bins[name] = np.zeros((0,), np.int64)

    def size(self, split):
        return self.images[split].shape[0]

    def labels(self, split):
        return one_hot(self.bins[split], self.num_bins)


def load_dataset(manifest_path, image_size, num_bins=5, split_seed=0,
                 ratios=(0.7, 0.1, 0.2)):
    """Load a manifest into a BoneDataset, assigning splits if absent."""
    records = load_manifest(manifest_path, num_bins=num_bins)
    if any(not r.split for r in records):
        assigned = split_dataset(records, ratios=ratios, seed=split_seed)
        for name, recs in assigned.items():
            for r in recs:
                r.split = name
    return BoneDataset(records, image_size, num_bins)
