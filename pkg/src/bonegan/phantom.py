"""Procedural bone phantoms with a known, age-controlled growth-plate gap.

Each phantom is a bright vertical shaft on a dark background, interrupted by
a horizontal dark gap (the growth plate) whose width shrinks linearly with
age and closes at 16 years:

    gap_px = round(gap_max_px * max(0, 1 - age_years / 16))

The epiphysis band just above the plate brightens linearly with age
(ossification).  Shaft geometry and texture noise depend only on the
identity seed, so the same identity rendered at two ages differs only inside
the fixed plate/epiphysis band.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import data
from .errors import ConfigurationError

FUSION_AGE_YEARS = 16.0

BACKGROUND = 18.0
SHAFT = 205.0
GAP = 25.0
EPIPHYSIS_BASE = 150.0
EPIPHYSIS_GAIN = 80.0  # added brightness at fusion age and beyond


@dataclass
class PhantomSpec:
    age_years: float
    identity_seed: int
    size: int = 64
    gap_max_px: int = 10


def gap_width_px(age_years, gap_max_px=10):
    return int(round(gap_max_px * max(0.0, 1.0 - age_years / FUSION_AGE_YEARS)))


def _identity_features(spec):
    rng = np.random.default_rng(spec.identity_seed)
    s = spec.size
    half_width = rng.uniform(0.14, 0.20) * s
    curvature = rng.uniform(-0.03, 0.03) * s
    phase = rng.uniform(0.0, 2 * np.pi)
    noise_amp = rng.uniform(2.0, 6.0)
    noise = rng.normal(0.0, 1.0, size=(s, s))
    return half_width, curvature, phase, noise_amp, noise


def age_band_rows(size, gap_max_px):
    """Row interval [r0, r1) that may ever change with age: the maximal gap
    band plus the epiphysis band above it."""
    center = size // 2
    epi_h = max(2, int(round(size * 0.12)))
    r0 = center - gap_max_px // 2 - gap_max_px % 2 - epi_h
    r1 = center + gap_max_px // 2 + gap_max_px % 2
    return r0, r1


def generate_phantom(spec: PhantomSpec):
    """Render one phantom; returns (image in [0, 255], metadata dict)."""
    if spec.size < 16:
        raise ConfigurationError(f"phantom size {spec.size} too small")
    s = spec.size
    half_width, curvature, phase, noise_amp, noise = _identity_features(spec)

    rows = np.arange(s)[:, None]
    cols = np.arange(s)[None, :]
    center_x = s / 2 + curvature * np.sin(np.pi * rows / s + phase)
    shaft_mask = np.abs(cols - center_x) <= half_width

    img = np.full((s, s), BACKGROUND)
    img[shaft_mask] = SHAFT

    center = s // 2
    gap = gap_width_px(spec.age_years, spec.gap_max_px)
    r0, _ = age_band_rows(s, spec.gap_max_px)
    epi_top = r0
    epi_bottom = center - spec.gap_max_px // 2 - spec.gap_max_px % 2
    ossification = min(spec.age_years / FUSION_AGE_YEARS, 1.0)
    epi_rows = (rows >= epi_top) & (rows < epi_bottom)
    img[epi_rows & shaft_mask] = EPIPHYSIS_BASE + EPIPHYSIS_GAIN * ossification

    if gap > 0:
        g0 = center - gap // 2 - gap % 2
        gap_rows = (rows >= g0) & (rows < g0 + gap)
        img[gap_rows & shaft_mask] = GAP

    img = np.clip(img + noise_amp * noise, 0.0, 255.0)
    meta = {
        "true_gap_px": gap,
        "identity_seed": spec.identity_seed,
        "age_years": spec.age_years,
    }
    return img, meta


def write_phantom_dataset(out_dir, n, size=64, seed=0, gap_max_px=10,
                          ratios=(0.7, 0.1, 0.2), num_bins=5, dataset_tag="phantom"):
    """Emit n phantom PNGs plus manifest.csv and metadata.csv.

    Ages cycle through the bins (balanced classes) with a uniform age inside
    each interval; identities are distinct per image.
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    meta_rows = []
    for i in range(n):
        b = i % num_bins
        age = float(b * data.BIN_WIDTH_YEARS + rng.uniform(0.0, data.BIN_WIDTH_YEARS - 0.001))
        spec = PhantomSpec(age_years=age, identity_seed=seed * 1_000_003 + i,
                           size=size, gap_max_px=gap_max_px)
        img, meta = generate_phantom(spec)
        rel = f"images/phantom_{i:05d}.png"
        Image.fromarray(np.round(img).astype(np.uint8), mode="L").save(out_dir / rel)
        records.append(data.SampleRecord(rel, age, "", dataset_tag))
        meta_rows.append((rel, meta["true_gap_px"], meta["identity_seed"]))

    for name, recs in data.split_dataset(records, ratios=ratios, seed=seed).items():
        for r in recs:
            r.split = name

    with open(out_dir / "manifest.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "age_years", "split", "dataset_tag"])
        for r in records:
            w.writerow([r.image_path, f"{r.age_years:.3f}", r.split, r.dataset_tag])
    with open(out_dir / "metadata.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "true_gap_px", "identity_seed"])
        w.writerows(meta_rows)
    return out_dir / "manifest.csv"
