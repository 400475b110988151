"""Evaluation: Frechet distance, age shifting, gap measurement, ablations.

The Frechet distance between Gaussian fits (m_a, C_a), (m_b, C_b) is

    ||m_a - m_b||^2 + Tr(C_a + C_b - 2 (C_a C_b)^{1/2})

with the matrix square root taken by eigendecomposition of the symmetrized
product sqrt(C_a) C_b sqrt(C_a); negative eigenvalues (numerical noise) are
clipped at zero.

Feature extraction is pluggable.  The self-contained desk extractor
average-pools an image to 8x8 and flattens (D = 64, no preconditioning
beyond the [-1, 1] input convention).  The inception extractor reproduces
the conventional pipeline (resize to 299, grayscale replicated to RGB,
inputs scaled to [-1, 1], 2048-d pooled features) but requires an externally
supplied weights file and never falls back silently.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import data as data_mod
from .errors import ConfigurationError, DimensionError, AgeRangeError

DESK_EXTRACTOR = "desk-extractor"
INCEPTION_EXTRACTOR = "pretrained-inception"

ABLATION_ROWS = (
    ("caae", "CAAE"),
    ("caae_dage_ls", "+ D_age, LS"),
    ("caae_sa", "+ SA"),
    ("bapgan", "BAPGAN"),
)


@dataclass
class FeatureStats:
    n: int
    mean: np.ndarray
    cov: np.ndarray


def compute_stats(features):
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] < 2:
        raise DimensionError(f"need an (n >= 2) x D feature matrix, got {feats.shape}")
    return FeatureStats(n=feats.shape[0], mean=feats.mean(axis=0),
                        cov=np.cov(feats, rowvar=False).reshape(feats.shape[1], feats.shape[1]))


def _psd_sqrt(mat):
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: FeatureStats, b: FeatureStats):
    if a.mean.shape != b.mean.shape:
        raise DimensionError(
            f"feature dimensions differ: {a.mean.shape[0]} vs {b.mean.shape[0]}")
    diff = a.mean - b.mean
    sqrt_a = _psd_sqrt(a.cov)
    inner = sqrt_a @ b.cov @ sqrt_a
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    tr_sqrt = np.sqrt(np.clip(vals, 0.0, None)).sum()
    fid = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * tr_sqrt)
    return max(fid, 0.0)


def _as_image_array(images):
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[:, None, :, :]
    if arr.ndim != 4 or arr.shape[1] != 1:
        raise DimensionError(f"expected (n, 1, S, S) images, got {arr.shape}")
    return arr


def desk_features(images):
    """Average-pool each image to 8x8 and flatten: a 64-d deterministic
    stand-in for a pretrained embedding."""
    arr = _as_image_array(images)
    n, _, s, _ = arr.shape
    if s % 8 != 0:
        raise DimensionError(f"image size {s} not divisible by 8")
    block = s // 8
    pooled = arr[:, 0].reshape(n, 8, block, 8, block).mean(axis=(2, 4))
    return pooled.reshape(n, 64).astype(np.float64)


_inception_cache = {}


def inception_features(images, weights_path, batch=32):
    if weights_path is None or not Path(weights_path).exists():
        raise ConfigurationError(
            "pretrained-inception features need a local torchvision inception_v3 "
            "state-dict file; pass its path via weights_path (no silent fallback). "
            f"Got: {weights_path!r}")
    key = str(weights_path)
    if key not in _inception_cache:
        from torchvision.models import inception_v3
        net = inception_v3(weights=None, aux_logits=True, init_weights=False)
        net.load_state_dict(torch.load(weights_path, map_location="cpu"))
        net.fc = torch.nn.Identity()
        net.eval()
        _inception_cache[key] = net
    net = _inception_cache[key]
    arr = _as_image_array(images)
    feats = []
    with torch.no_grad():
        for i in range(0, len(arr), batch):
            x = torch.from_numpy(arr[i:i + batch]).repeat(1, 3, 1, 1)
            x = torch.nn.functional.interpolate(
                x, size=(299, 299), mode="bilinear", align_corners=False)
            feats.append(net(x).numpy())
    return np.concatenate(feats, axis=0).astype(np.float64)


def extract_features(images, extractor_id=DESK_EXTRACTOR, weights_path=None):
    if extractor_id == DESK_EXTRACTOR:
        return desk_features(images)
    if extractor_id == INCEPTION_EXTRACTOR:
        return inception_features(images, weights_path)
    raise ConfigurationError(
        f"unknown extractor {extractor_id!r}; expected "
        f"{DESK_EXTRACTOR!r} or {INCEPTION_EXTRACTOR!r}")


def frechet_between_image_sets(images_a, images_b, extractor_id=DESK_EXTRACTOR,
                               weights_path=None):
    stats_a = compute_stats(extract_features(images_a, extractor_id, weights_path))
    stats_b = compute_stats(extract_features(images_b, extractor_id, weights_path))
    return frechet_distance(stats_a, stats_b)


# ---------------------------------------------------------------------------
# age-conditional generation helpers

def age_invariant_reconstruct(model, images, labels):
    """G(E(x), l) with the subject's own label: the realism reference output."""
    x = torch.as_tensor(np.asarray(images, dtype=np.float32))
    l = torch.as_tensor(np.asarray(labels, dtype=np.float32))
    with torch.no_grad():
        return model.generate(model.encode(x), l).numpy()


def progress_image(model, images, source_bin, delta_years):
    """Re-generate conditioned on the bin delta_years away (one-hot, no
    smoothing at inference).  delta_years must be a whole number of 4-year
    bins; the target bin must exist (no clamping)."""
    shift, rem = divmod(delta_years, data_mod.BIN_WIDTH_YEARS)
    if rem != 0:
        raise AgeRangeError(
            f"delta_years must be a multiple of {data_mod.BIN_WIDTH_YEARS}, got {delta_years}")
    k = model.cfg.num_bins
    target = source_bin + int(shift)
    if not 0 <= source_bin < k:
        raise AgeRangeError(f"source bin {source_bin} outside [0, {k})")
    if not 0 <= target < k:
        raise AgeRangeError(
            f"target bin {target} (source {source_bin} shifted {delta_years}y) outside [0, {k})")
    x = torch.as_tensor(np.asarray(images, dtype=np.float32))
    labels = np.zeros((x.shape[0], k), dtype=np.float32)
    labels[:, target] = 1.0
    with torch.no_grad():
        return model.generate(model.encode(x), torch.from_numpy(labels)).numpy(), target


def uniform_noise_images(n, size, seed=0):
    """Uniform [-1, 1] images: the FID sanity baseline."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(n, 1, size, size)).astype(np.float32)


# ---------------------------------------------------------------------------
# phantom gap measurement

def measure_gap_width(image, min_contrast=0.25):
    """Measured growth-plate gap in pixels.

    Averages intensity over a narrow central column band, normalizes the
    resulting per-row profile, and returns the length of the longest run
    below the midpoint threshold between shaft and gap intensities within
    the central half of the rows.  A profile whose contrast is below
    min_contrast of the image's own span reads as fused (0).
    """
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[0]
    s = arr.shape[0]
    half_band = max(2, s // 12)
    cols = slice(s // 2 - half_band, s // 2 + half_band)
    rows = slice(s // 4, 3 * s // 4)
    profile = arr[rows, cols].mean(axis=1)
    lo, hi = float(profile.min()), float(profile.max())
    span = float(arr.max() - arr.min())
    if span <= 0 or (hi - lo) < min_contrast * span:
        return 0
    threshold = (hi + lo) / 2.0
    below = profile < threshold
    best = run = 0
    for flag in below:
        run = run + 1 if flag else 0
        best = max(best, run)
    return int(best)


# ---------------------------------------------------------------------------
# Table-1-shaped ablation report

def ablation_report(dataset, checkpoints, split="test", extractor_id=DESK_EXTRACTOR,
                    weights_path=None):
    """FID of real vs age-invariant reconstruction for the four flag rows.

    `checkpoints` maps variant name (caae, caae_dage_ls, caae_sa, bapgan) to
    a checkpoint directory.  Returns one dict per row.
    """
    from .trainer import load_model_from_checkpoint

    missing = [name for name, _ in ABLATION_ROWS if name not in checkpoints]
    if missing:
        raise ConfigurationError(f"missing checkpoints for ablation rows: {missing}")
    from .config import VARIANT_FLAGS

    real = dataset.images[split]
    labels = dataset.labels(split)
    rows = []
    for variant, label in ABLATION_ROWS:
        model, _cfg = load_model_from_checkpoint(checkpoints[variant])
        if model.cfg.flags() != VARIANT_FLAGS[variant]:
            raise ConfigurationError(
                f"checkpoint for row {variant!r} has flags {model.cfg.flags()}, "
                f"expected {VARIANT_FLAGS[variant]}")
        recon = age_invariant_reconstruct(model, real, labels)
        fid = frechet_between_image_sets(real, recon, extractor_id, weights_path)
        dage, ls, sa = model.cfg.flags()
        rows.append({"model": label, "variant": variant, "dage": dage, "ls": ls,
                     "sa": sa, "fid": fid})
    return rows


def write_ablation_csv(rows, path):
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "dage", "ls", "sa", "fid"])
        for r in rows:
            w.writerow([r["model"], int(r["dage"]), int(r["ls"]), int(r["sa"]),
                        f"{r['fid']:.4f}"])


def format_ablation_table(rows):
    def mark(flag):
        return "yes" if flag else "no"

    lines = [f"{'Model':<14} {'D_age':<6} {'LS':<4} {'SA':<4} {'FID':>10}"]
    for r in rows:
        lines.append(f"{r['model']:<14} {mark(r['dage']):<6} {mark(r['ls']):<4} "
                     f"{mark(r['sa']):<4} {r['fid']:>10.2f}")
    return "\n".join(lines)
