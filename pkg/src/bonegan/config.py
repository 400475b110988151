"""Model and training configuration.

The three ablation flags (age discriminator, label smoothing, self-attention)
generate the four studied model variants:

    caae          (False, False, False)
    caae_dage_ls  (True,  True,  False)
    caae_sa       (False, False, True)
    bapgan        (True,  True,  True)
"""

import json
from dataclasses import dataclass, field, asdict

from .errors import ConfigurationError

CONFIG_FORMAT_VERSION = 1

# variant name -> (use_dage, use_ls, use_sa)
VARIANT_FLAGS = {
    "caae": (False, False, False),
    "caae_dage_ls": (True, True, False),
    "caae_sa": (False, False, True),
    "bapgan": (True, True, True),
}


def _is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class ModelConfig:
    """Shapes and ablation flags of the five networks."""

    image_size: int = 128
    latent_dim: int = 50
    num_bins: int = 5
    base_channels: int = 64
    use_dage: bool = True
    use_ls: bool = True
    use_sa: bool = True
    smoothing: float = 0.2
    # copies of the label concatenated to the latent code at the generator
    # input; tiling strengthens age conditioning against the identity code
    label_tile: int = 1
    # 0 selects the default placement: 32x32 maps at image_size 128,
    # image_size // 4 below that (16x16 at the desk scale of 64).
    sa_resolution: int = 0
    attn_reduction: int = 8
    # age head on the shared image-discriminator trunk by default; True gives
    # the age discriminator its own convolutional trunk
    separate_age_trunk: bool = False

    def validate(self):
        if not _is_power_of_two(self.image_size) or self.image_size < 8:
            raise ConfigurationError(
                f"image_size must be a power of two >= 8, got {self.image_size}")
        if self.latent_dim < 1:
            raise ConfigurationError(f"latent_dim must be positive, got {self.latent_dim}")
        if self.num_bins < 2:
            raise ConfigurationError(f"num_bins must be >= 2, got {self.num_bins}")
        if self.base_channels < 1:
            raise ConfigurationError("base_channels must be positive")
        if not 0.0 <= self.smoothing < 1.0:
            raise ConfigurationError(f"smoothing must be in [0, 1), got {self.smoothing}")
        if self.attn_reduction < 1:
            raise ConfigurationError("attn_reduction must be positive")
        if self.label_tile < 1:
            raise ConfigurationError("label_tile must be positive")
        sa_res = self.effective_sa_resolution()
        if self.use_sa and not _is_power_of_two(sa_res):
            raise ConfigurationError(f"sa_resolution must be a power of two, got {sa_res}")
        return self

    def effective_sa_resolution(self):
        if self.sa_resolution:
            return self.sa_resolution
        return 32 if self.image_size >= 128 else max(4, self.image_size // 4)

    def flags(self):
        return (self.use_dage, self.use_ls, self.use_sa)

    def variant_name(self):
        for name, flags in VARIANT_FLAGS.items():
            if flags == self.flags():
                return name
        return "custom"

    def with_variant(self, name):
        if name not in VARIANT_FLAGS:
            raise ConfigurationError(
                f"unknown variant {name!r}; expected one of {sorted(VARIANT_FLAGS)}")
        dage, ls, sa = VARIANT_FLAGS[name]
        return ModelConfig(**{**asdict(self), "use_dage": dage, "use_ls": ls, "use_sa": sa})


@dataclass
class TrainConfig:
    """Optimization schedule: Adam with a two-timescale learning rate."""

    steps: int = 50_000
    batch_size: int = 32
    lr_eg_did: float = 1e-4
    lr_dimg_dage: float = 4e-4
    beta1: float = 0.5
    beta2: float = 0.999
    lambda_recon: float = 10_000.0
    lambda_age: float = 100.0
    seed: int = 0
    checkpoint_period: int = 1000
    log_period: int = 10
    augment: bool = True
    model: ModelConfig = field(default_factory=ModelConfig)

    def validate(self):
        if self.steps < 1:
            raise ConfigurationError("steps must be positive")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be positive")
        if self.lr_eg_did < 0 or self.lr_dimg_dage < 0:
            raise ConfigurationError("learning rates must be non-negative")
        if self.checkpoint_period < 1 or self.log_period < 1:
            raise ConfigurationError("periods must be positive")
        self.model.validate()
        return self


def desk_model_config(**overrides):
    """Small configuration for CPU-scale experiments on 64x64 phantoms."""
    base = dict(image_size=64, base_channels=16, label_tile=10)
    base.update(overrides)
    return ModelConfig(**base)


def desk_train_config(**overrides):
    model = overrides.pop("model", desk_model_config())
    base = dict(steps=2000, batch_size=16, checkpoint_period=500, model=model)
    base.update(overrides)
    return TrainConfig(**base)


def train_config_to_dict(cfg):
    d = asdict(cfg)
    d["format_version"] = CONFIG_FORMAT_VERSION
    return d


def train_config_from_dict(d):
    d = dict(d)
    version = d.pop("format_version", CONFIG_FORMAT_VERSION)
    if version != CONFIG_FORMAT_VERSION:
        raise ConfigurationError(
            f"config format_version {version} not supported (expected {CONFIG_FORMAT_VERSION})")
    model_part = d.pop("model", {})
    unknown = set(d) - set(TrainConfig.__dataclass_fields__)
    if unknown:
        raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
    unknown_model = set(model_part) - set(ModelConfig.__dataclass_fields__)
    if unknown_model:
        raise ConfigurationError(f"unknown model config fields: {sorted(unknown_model)}")
    return TrainConfig(model=ModelConfig(**model_part), **d).validate()


def load_train_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    return train_config_from_dict(raw)


def save_train_config(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(train_config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
