"""Training objectives.

The full objective is a min-max game over five terms: a reconstruction
penalty between an image and its re-generation, two adversarial games (one on
the latent code against its uniform prior, one on images), and, when the age
discriminator is enabled, a pair of soft-target age-classification terms.
The per-network trainable pieces are packaged as a :class:`LossBundle`:

    loss_eg   = lambda_recon * recon + id_adv_g + img_adv_g + lambda_age * age_g
    loss_did  = id_adv_d
    loss_dimg = img_adv_d
    loss_dage = lambda_age * age_d        (only with the age discriminator)

The generator side of each adversarial game uses the non-saturating form
-log D(fake) instead of the literal log(1 - D(fake)); fixed points are
unchanged and gradients do not vanish early in training.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import torch

from .errors import ContractError, DimensionError

# scores are clamped away from {0, 1} before logs so losses stay finite
SCORE_EPS = 1e-7


def _as_fraction(eps):
    if isinstance(eps, Fraction):
        return eps
    if isinstance(eps, int):
        return Fraction(eps)
    # read floats as their decimal literal (0.2 -> 1/5), not their binary value
    return Fraction(str(eps))


def smooth_one_hot_exact(hot_index, num_bins, eps=0.2):
    """Exact-rational smoothing of a one-hot row: each existing neighbor bin
    receives mass eps and the hot bin keeps the remainder, so [0,0,1,0,0]
    becomes [0,0.2,0.6,0.2,0] and the boundary row [1,0,0,0,0] becomes
    [0.8,0.2,0,0,0]. Rows sum to 1 exactly by construction."""
    if not 0 <= hot_index < num_bins:
        raise ContractError(f"hot index {hot_index} outside [0, {num_bins})")
    eps = _as_fraction(eps)
    if not 0 <= eps < 1:
        raise ContractError(f"smoothing must be in [0, 1), got {eps}")
    row = [Fraction(0)] * num_bins
    neighbors = [j for j in (hot_index - 1, hot_index + 1) if 0 <= j < num_bins]
    for j in neighbors:
        row[j] = eps
    row[hot_index] = 1 - eps * len(neighbors)
    if row[hot_index] < 0:
        raise ContractError(f"smoothing {eps} moves more than the available mass")
    return row


def smooth_age_label(labels, eps=0.2):
    """Smooth a batch of one-hot age labels (float64 view of the exact rule)."""
    arr = np.asarray(labels, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimensionError(f"labels must be 1-D or 2-D, got shape {arr.shape}")
    out = np.zeros_like(arr)
    for i, row in enumerate(arr):
        hot = np.flatnonzero(row == 1.0)
        if len(hot) != 1 or row.sum() != 1.0 or (row < 0).any():
            raise ContractError(f"row {i} is not one-hot: {row.tolist()}")
        exact = smooth_one_hot_exact(int(hot[0]), arr.shape[1], eps)
        out[i] = [float(v) for v in exact]
    return out[0] if squeeze else out


def reconstruction_loss(x, x_prime):
    """Mean over the batch of the squared l2 distance, normalized by the
    per-image element count (so the weight lambda_recon is resolution
    independent)."""
    x = torch.as_tensor(x)
    x_prime = torch.as_tensor(x_prime)
    if x.shape != x_prime.shape:
        raise DimensionError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_prime.shape)}")
    return ((x - x_prime) ** 2).mean()


def _clamped_log(scores):
    return torch.log(torch.clamp(torch.as_tensor(scores), SCORE_EPS, 1.0 - SCORE_EPS))


def adversarial_losses(scores_real, scores_fake):
    """Discriminator and (non-saturating) generator losses for one game.

    d_loss = -mean log D(real) - mean log(1 - D(fake))
    g_loss = -mean log D(fake)
    """
    scores_fake = torch.as_tensor(scores_fake)
    d_loss = -_clamped_log(scores_real).mean() - torch.log(
        torch.clamp(1.0 - scores_fake, SCORE_EPS, 1.0 - SCORE_EPS)).mean()
    return d_loss, generator_adversarial_loss(scores_fake)


def generator_adversarial_loss(scores_fake):
    """Non-saturating generator side alone: -mean log D(fake)."""
    return -_clamped_log(scores_fake).mean()


def soft_cross_entropy(logits, target):
    """-mean_i sum_k target[i,k] * log softmax(logits)[i,k] (targets may be soft)."""
    logits = torch.as_tensor(logits)
    target = torch.as_tensor(target, dtype=logits.dtype)
    if logits.shape != target.shape:
        raise DimensionError(f"shape mismatch: {tuple(logits.shape)} vs {tuple(target.shape)}")
    log_q = torch.log_softmax(logits, dim=-1)
    return -(target * log_q).sum(dim=-1).mean()


def age_classification_losses(logits_real, logits_fake, target):
    """Age-classification terms: the real-image term trains the discriminator
    side, the generated-image term trains the encoder/generator side."""
    age_d = soft_cross_entropy(logits_real, target)
    age_g = soft_cross_entropy(logits_fake, target)
    return age_d, age_g


REQUIRED_PARTS = ("recon", "id_adv_d", "id_adv_g", "img_adv_d", "img_adv_g")
AGE_PARTS = ("age_d", "age_g")


@dataclass
class LossBundle:
    loss_eg: object
    loss_did: object
    loss_dimg: object
    loss_dage: object  # None when the age discriminator is disabled
    components: dict

    def scalars(self):
        """Plain-float view (detaches any tensors) for logging."""
        out = {}
        for name in ("loss_eg", "loss_did", "loss_dimg", "loss_dage"):
            v = getattr(self, name)
            out[name] = float(v) if v is not None else float("nan")
        for k, v in self.components.items():
            out[k] = float(v)
        return out


def compose_losses(model_config, parts, lambda_recon=10_000.0, lambda_age=100.0):
    """Assemble named loss components into the per-network bundle.

    `parts` must contain exactly the components the active flags call for:
    the five base terms always, age_d/age_g if and only if use_dage is set.
    """
    missing = [k for k in REQUIRED_PARTS if k not in parts]
    if missing:
        raise ContractError(f"missing loss components: {missing}")
    has_age = all(k in parts for k in AGE_PARTS)
    some_age = any(k in parts for k in AGE_PARTS)
    if model_config.use_dage and not has_age:
        raise ContractError("use_dage is set but age_d/age_g components are missing")
    if not model_config.use_dage and some_age:
        raise ContractError("age components supplied but use_dage is not set")

    loss_eg = lambda_recon * parts["recon"] + parts["id_adv_g"] + parts["img_adv_g"]
    loss_dage = None
    if model_config.use_dage:
        loss_eg = loss_eg + lambda_age * parts["age_g"]
        loss_dage = lambda_age * parts["age_d"]
    return LossBundle(
        loss_eg=loss_eg,
        loss_did=parts["id_adv_d"],
        loss_dimg=parts["img_adv_d"],
        loss_dage=loss_dage,
        components=dict(parts),
    )
