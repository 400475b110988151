"""Adversarial training loop.

Per step: sample the uniform prior, smooth the batch labels (when enabled),
then take one Adam step each for the image discriminator (with its age
head), the latent discriminator, and the encoder+generator jointly.  The
discriminators run at four times the encoder/generator learning rate (the
two-timescale rule).  Spectral-norm power-iteration vectors advance exactly
once per step, before any forward.

All per-step randomness (batch indices, prior samples, augmentation seeds)
is derived from (seed, step) with a counter-based hash, so a run can resume
from any checkpoint bit-for-bit without serialized RNG streams.
"""

import csv
import hashlib
from collections import deque
from pathlib import Path

import numpy as np
import torch

from . import data as data_mod
from .checkpoint import load_arrays, save_arrays
from .config import TrainConfig, train_config_from_dict, train_config_to_dict
from .errors import ConfigurationError, TrainingDiverged
from .losses import (adversarial_losses, compose_losses,
                     generator_adversarial_loss, reconstruction_loss,
                     smooth_age_label, soft_cross_entropy)
from .networks import build_model
from .spectral import update_all_u

HISTORY_LEN = 1000
METRIC_COLUMNS = ("step", "loss_eg", "loss_did", "loss_dimg", "loss_dage",
                  "recon", "age_val_acc")


def derive_seed(seed, purpose, step):
    digest = hashlib.blake2b(f"{seed}/{purpose}/{step}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class TrainState:
    """Model, optimizers, step counter and a loss-history ring buffer."""

    def __init__(self, config: TrainConfig):
        config.validate()
        self.config = config
        self.model = build_model(config.model, seed=config.seed)
        self.step = 0
        self.history = deque(maxlen=HISTORY_LEN)
        self.opt_eg = torch.optim.Adam(
            list(self.model.encoder.parameters()) + list(self.model.generator.parameters()),
            lr=config.lr_eg_did, betas=(config.beta1, config.beta2))
        self.opt_did = torch.optim.Adam(
            self.model.latent_disc.parameters(),
            lr=config.lr_eg_did, betas=(config.beta1, config.beta2))
        self.opt_dimg = torch.optim.Adam(
            self.model.image_disc.parameters(),
            lr=config.lr_dimg_dage, betas=(config.beta1, config.beta2))

    def _optimizers(self):
        return {"eg": self.opt_eg, "did": self.opt_did, "dimg": self.opt_dimg}

    def _optimizer_param_names(self, opt):
        by_id = {id(p): n for n, p in self.model.named_parameters()}
        return [by_id[id(p)] for group in opt.param_groups for p in group["params"]]

    def to_arrays(self):
        arrays = {}
        for name, tensor in self.model.state_dict().items():
            arrays[f"model.{name}"] = tensor.detach().cpu().numpy()
        for opt_name, opt in self._optimizers().items():
            for pname, p in zip(self._optimizer_param_names(opt),
                                (p for g in opt.param_groups for p in g["params"])):
                st = opt.state.get(p)
                if not st:
                    continue
                arrays[f"optim.{opt_name}.{pname}.exp_avg"] = st["exp_avg"].numpy()
                arrays[f"optim.{opt_name}.{pname}.exp_avg_sq"] = st["exp_avg_sq"].numpy()
                arrays[f"optim.{opt_name}.{pname}.step"] = np.float32(st["step"])
        return arrays

    def load_from_arrays(self, arrays, step):
        model_state = {}
        for name, tensor in self.model.state_dict().items():
            key = f"model.{name}"
            arr = arrays[key]
            model_state[name] = torch.from_numpy(np.array(arr)).reshape(tensor.shape)
        self.model.load_state_dict(model_state)
        for opt_name, opt in self._optimizers().items():
            names = self._optimizer_param_names(opt)
            params = [p for g in opt.param_groups for p in g["params"]]
            for pname, p in zip(names, params):
                key = f"optim.{opt_name}.{pname}.exp_avg"
                if key not in arrays:
                    continue
                opt.state[p] = {
                    "step": torch.tensor(
                        float(arrays[f"optim.{opt_name}.{pname}.step"])),
                    "exp_avg": torch.from_numpy(
                        np.array(arrays[key])).reshape(p.shape),
                    "exp_avg_sq": torch.from_numpy(
                        np.array(arrays[f"optim.{opt_name}.{pname}.exp_avg_sq"])).reshape(p.shape),
                }
        self.step = step


def _batch_labels(config, bins):
    onehot = data_mod.one_hot(bins, config.model.num_bins)
    if config.model.use_ls:
        return torch.from_numpy(
            smooth_age_label(onehot, config.model.smoothing).astype(np.float32))
    return torch.from_numpy(onehot)


def _loss_parts(state, images, labels, z_star, full_graph=False):
    """All named loss components for one batch.

    With full_graph the fake path is not detached, so every component is a
    differentiable function of every parameter (used by gradient checks and
    loss evaluation); training phases recompute the pieces they step on.
    """
    model = state.model
    cfg = state.config
    parts = {}
    z = model.encode(images)
    fake = model.generate(z, labels)
    fake_for_d = fake if full_graph else fake.detach()

    s_real, logits_real = model.discriminate_image(images, labels)
    s_fake_d, _ = model.discriminate_image(fake_for_d, labels)
    parts["img_adv_d"], _ = adversarial_losses(s_real, s_fake_d)

    s_prior = model.discriminate_identity(z_star)
    s_enc = model.discriminate_identity(z if full_graph else z.detach())
    parts["id_adv_d"], _ = adversarial_losses(s_prior, s_enc)

    parts["recon"] = reconstruction_loss(images, fake)
    parts["id_adv_g"] = generator_adversarial_loss(model.discriminate_identity(z))
    s_fake_g, logits_fake = model.discriminate_image(fake, labels)
    parts["img_adv_g"] = generator_adversarial_loss(s_fake_g)
    if cfg.model.use_dage:
        parts["age_d"] = soft_cross_entropy(logits_real, labels)
        parts["age_g"] = soft_cross_entropy(logits_fake, labels)
    return parts


def evaluate_losses(state, images, bins):
    """Loss bundle on a batch without touching any state (no updates)."""
    cfg = state.config
    images = torch.as_tensor(images, dtype=torch.float32)
    labels = _batch_labels(cfg, bins)
    gen = torch.Generator().manual_seed(derive_seed(cfg.seed, "prior", state.step))
    z_star = torch.rand((images.shape[0], cfg.model.latent_dim), generator=gen) * 2 - 1
    with torch.no_grad():
        parts = _loss_parts(state, images, labels, z_star)
    return compose_losses(cfg.model, {k: float(v) for k, v in parts.items()},
                          cfg.lambda_recon, cfg.lambda_age)


def train_step(state, images, bins):
    """One optimization step; returns the loss bundle (floats)."""
    cfg = state.config
    model = state.model
    state.step += 1
    images = torch.as_tensor(images, dtype=torch.float32)
    labels = _batch_labels(cfg, bins)
    gen = torch.Generator().manual_seed(derive_seed(cfg.seed, "prior", state.step))
    z_star = torch.rand((images.shape[0], cfg.model.latent_dim), generator=gen) * 2 - 1

    update_all_u(model)
    parts = {}

    # image discriminator (+ age head), lr 4e-4
    with torch.no_grad():
        fake = model.generate(model.encode(images), labels)
    s_real, logits_real = model.discriminate_image(images, labels)
    s_fake, _ = model.discriminate_image(fake, labels)
    img_adv_d, _ = adversarial_losses(s_real, s_fake)
    d_loss = img_adv_d
    if cfg.model.use_dage:
        age_d = soft_cross_entropy(logits_real, labels)
        d_loss = d_loss + cfg.lambda_age * age_d
        parts["age_d"] = float(age_d.detach())
    state.opt_dimg.zero_grad(set_to_none=True)
    d_loss.backward()
    state.opt_dimg.step()
    parts["img_adv_d"] = float(img_adv_d.detach())

    # latent discriminator, lr 1e-4
    with torch.no_grad():
        z = model.encode(images)
    id_adv_d, _ = adversarial_losses(model.discriminate_identity(z_star),
                                     model.discriminate_identity(z))
    state.opt_did.zero_grad(set_to_none=True)
    id_adv_d.backward()
    state.opt_did.step()
    parts["id_adv_d"] = float(id_adv_d.detach())

    # encoder + generator jointly, lr 1e-4
    z = model.encode(images)
    fake = model.generate(z, labels)
    recon = reconstruction_loss(images, fake)
    id_adv_g = generator_adversarial_loss(model.discriminate_identity(z))
    s_fake_g, logits_fake = model.discriminate_image(fake, labels)
    img_adv_g = generator_adversarial_loss(s_fake_g)
    eg_loss = cfg.lambda_recon * recon + id_adv_g + img_adv_g
    if cfg.model.use_dage:
        age_g = soft_cross_entropy(logits_fake, labels)
        eg_loss = eg_loss + cfg.lambda_age * age_g
        parts["age_g"] = float(age_g.detach())
    state.opt_eg.zero_grad(set_to_none=True)
    eg_loss.backward()
    state.opt_eg.step()
    parts.update(recon=float(recon.detach()), id_adv_g=float(id_adv_g.detach()),
                 img_adv_g=float(img_adv_g.detach()))

    bundle = compose_losses(cfg.model, parts, cfg.lambda_recon, cfg.lambda_age)
    scalars = bundle.scalars()
    finite_keys = [k for k in scalars if not (k == "loss_dage" and bundle.loss_dage is None)]
    if not all(np.isfinite(scalars[k]) for k in finite_keys):
        raise TrainingDiverged(state.step, scalars)
    state.history.append({"step": state.step, **scalars})
    return bundle


def age_validation_accuracy(state, dataset, split="val", chunk=64):
    """Accuracy of the age head on a held-out split (uses zeroed label planes)."""
    if not state.config.model.use_dage or dataset.size(split) == 0:
        return float("nan")
    model = state.model
    images = dataset.images[split]
    bins = dataset.bins[split]
    correct = 0
    with torch.no_grad():
        for i in range(0, len(images), chunk):
            x = torch.from_numpy(images[i:i + chunk])
            dummy = torch.zeros((x.shape[0], state.config.model.num_bins))
            _, logits = model.discriminate_image(x, dummy)
            correct += int((logits.argmax(dim=1).numpy() == bins[i:i + chunk]).sum())
    return correct / len(images)


def _sample_batch(state, dataset):
    cfg = state.config
    n = dataset.size("train")
    rng = np.random.default_rng(derive_seed(cfg.seed, "batch", state.step + 1))
    idx = rng.integers(0, n, size=cfg.batch_size)
    imgs = dataset.images["train"][idx, 0]
    if cfg.augment:
        imgs = np.stack([
            data_mod.augment(img, data_mod.augmentation_seed(cfg.seed, state.step + 1, int(i)))
            for img, i in zip(imgs, idx)])
    return imgs[:, None, :, :], dataset.bins["train"][idx]


def save_checkpoint(state, out_dir):
    extra = {"history": list(state.history)[-100:]}
    return save_arrays(out_dir, state.to_arrays(), state.step,
                       train_config_to_dict(state.config), extra)


def load_checkpoint(ckpt_dir):
    arrays, manifest = load_arrays(ckpt_dir)
    config = train_config_from_dict(manifest["config"])
    state = TrainState(config)
    state.load_from_arrays(arrays, manifest["step"])
    for row in manifest.get("extra", {}).get("history", []):
        state.history.append(row)
    return state


def train(config: TrainConfig, dataset, out_dir, resume_from=None, progress=None):
    """Run the training schedule; writes checkpoints and a metric-log CSV.

    Returns (state, path of the final checkpoint).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if dataset.size("train") == 0:
        raise ConfigurationError("training split is empty")

    if resume_from is not None:
        state = load_checkpoint(resume_from)
    else:
        state = TrainState(config)
    ckpt_root = out_dir / "checkpoints"
    ckpt_root.mkdir(exist_ok=True)

    metrics_path = out_dir / "metrics.csv"
    fresh_log = state.step == 0 or not metrics_path.exists()
    log_fh = open(metrics_path, "w" if fresh_log else "a", newline="", encoding="utf-8")
    writer = csv.writer(log_fh)
    if fresh_log:
        writer.writerow(METRIC_COLUMNS)

    try:
        while state.step < config.steps:
            images, bins = _sample_batch(state, dataset)
            bundle = train_step(state, images, bins)
            if state.step % config.log_period == 0 or state.step == config.steps:
                s = bundle.scalars()
                acc = age_validation_accuracy(state, dataset)
                writer.writerow([state.step,
                                 f"{s['loss_eg']:.6f}", f"{s['loss_did']:.6f}",
                                 f"{s['loss_dimg']:.6f}",
                                 f"{s['loss_dage']:.6f}" if config.model.use_dage else "",
                                 f"{s['recon']:.6f}",
                                 "" if np.isnan(acc) else f"{acc:.4f}"])
                log_fh.flush()
            if progress is not None:
                progress(state.step, bundle)
            if state.step % config.checkpoint_period == 0:
                save_checkpoint(state, ckpt_root / f"step_{state.step:06d}")
    finally:
        log_fh.close()

    final = save_checkpoint(state, ckpt_root / "final")
    return state, final


def load_model_from_checkpoint(ckpt_dir):
    """Convenience: rebuild just the model (eval use) from a checkpoint."""
    state = load_checkpoint(ckpt_dir)
    state.model.eval()
    return state.model, state.config
