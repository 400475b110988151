"""The five networks.

Topology (image_size 128, base_channels 64):

    encoder      5 stride-2 convs, channels 64 -> 1024, then fc to the latent
                 code with tanh squashing (code shares the uniform prior's
                 [-1, 1] support)
    generator    fc from latent+label to a 4x4 map, then 5 stride-2 deconvs,
                 tanh output
    latent_disc  fc stack 64/32/16/1 on the latent code, sigmoid score
    image_disc   shared 4-conv trunk with a realness head and (optionally) a
                 K-way age head

Smaller image sizes drop stride-2 stages (one per halving), so the desk scale
of 64 uses 4 encoder stages.  Self-attention blocks sit at the configured
feature-map resolution and open from an exact identity (gate starts at 0).
Spectral normalization on the discriminators is tied to the self-attention
flag, matching the "attention plus stabilization" ablation row.
"""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ModelConfig
from .errors import ConfigurationError, DimensionError
from .spectral import SNConv2d, SNLinear, SpectralMixin, conv2d, linear


def num_stages(image_size):
    # stride-2 stages down to (or up from) a 4x4 map
    return int(math.log2(image_size)) - 2


class SelfAttention2d(nn.Module):
    """Gated residual attention over spatial positions: out = f + gamma * o(f).

    Queries/keys use channels/reduction channels; gamma starts at 0 so the
    block is an exact identity until the gate opens.
    """

    def __init__(self, channels, reduction=8, spectral=False):
        super().__init__()
        if channels % reduction != 0:
            raise ConfigurationError(
                f"channels {channels} not divisible by attention reduction {reduction}")
        qk = channels // reduction
        self.query = conv2d(channels, qk, 1, 1, 0, spectral)
        self.key = conv2d(channels, qk, 1, 1, 0, spectral)
        self.value = conv2d(channels, channels, 1, 1, 0, spectral)
        self.gamma = nn.Parameter(torch.zeros(1))

    def forward(self, f, return_attention=False):
        b, c, h, w = f.shape
        n = h * w
        q = self.query(f).reshape(b, -1, n)                   # (B, qk, N)
        k = self.key(f).reshape(b, -1, n)
        energy = torch.bmm(q.transpose(1, 2), k)              # (B, N, N)
        attention = torch.softmax(energy, dim=-1)             # rows sum to 1
        v = self.value(f).reshape(b, c, n)
        o = torch.bmm(v, attention.transpose(1, 2)).reshape(b, c, h, w)
        out = f + self.gamma * o
        if return_attention:
            return out, attention
        return out


class Encoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        n = num_stages(cfg.image_size)
        layers = []
        in_ch = 1
        for i in range(n):
            out_ch = cfg.base_channels * 2 ** i
            layers.append(nn.Conv2d(in_ch, out_ch, 4, stride=2, padding=1))
            if i > 0:
                layers.append(nn.InstanceNorm2d(out_ch, affine=True))
            layers.append(nn.LeakyReLU(0.2))
            in_ch = out_ch
        self.convs = nn.Sequential(*layers)
        self.fc = nn.Linear(in_ch * 4 * 4, cfg.latent_dim)

    def forward(self, x):
        h = self.convs(x)
        return torch.tanh(self.fc(h.flatten(1)))


class Generator(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        n = num_stages(cfg.image_size)
        self.label_tile = cfg.label_tile
        self.top_channels = cfg.base_channels * 2 ** (n - 1)
        self.fc = nn.Linear(cfg.latent_dim + cfg.num_bins * cfg.label_tile,
                            self.top_channels * 4 * 4)
        sa_res = cfg.effective_sa_resolution()

        self.attention = None
        self.attn_after = None  # -1: after the fc reshape, i: after stage i
        if cfg.use_sa and sa_res == 4:
            self.attention = SelfAttention2d(self.top_channels, cfg.attn_reduction)
            self.attn_after = -1
        self.stages = nn.ModuleList()
        res, in_ch = 4, self.top_channels
        for i in range(n):
            last = i == n - 1
            out_ch = 1 if last else cfg.base_channels * 2 ** (n - 2 - i)
            mods = [nn.ConvTranspose2d(in_ch, out_ch, 4, stride=2, padding=1)]
            res *= 2
            if not last:
                mods += [nn.InstanceNorm2d(out_ch, affine=True), nn.ReLU()]
                if cfg.use_sa and res == sa_res and self.attention is None:
                    self.attention = SelfAttention2d(out_ch, cfg.attn_reduction)
                    self.attn_after = i
            self.stages.append(nn.Sequential(*mods))
            in_ch = out_ch

    def forward(self, z, label):
        h = self.fc(torch.cat([z, label.repeat(1, self.label_tile)], dim=1))
        h = F.relu(h).reshape(-1, self.top_channels, 4, 4)
        if self.attn_after == -1:
            h = self.attention(h)
        for i, stage in enumerate(self.stages):
            h = stage(h)
            if self.attn_after == i:
                h = self.attention(h)
        return torch.tanh(h)


class LatentDiscriminator(nn.Module):
    """Scores latent codes against the uniform prior, in (0, 1)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        spectral = cfg.use_sa
        sizes = [cfg.latent_dim, 64, 32, 16]
        layers = []
        for a, b in zip(sizes, sizes[1:]):
            layers += [linear(a, b, spectral), nn.LeakyReLU(0.2)]
        layers.append(linear(sizes[-1], 1, spectral))
        self.net = nn.Sequential(*layers)

    def forward(self, z):
        return torch.sigmoid(self.net(z)).squeeze(-1)


class _ConvTrunk(nn.Module):
    def __init__(self, cfg: ModelConfig, in_channels, with_attention):
        super().__init__()
        spectral = cfg.use_sa
        n = min(4, num_stages(cfg.image_size))
        sa_res = cfg.effective_sa_resolution()
        layers = []
        res, in_ch = cfg.image_size, in_channels
        for i in range(n):
            out_ch = cfg.base_channels * 2 ** i
            layers += [conv2d(in_ch, out_ch, 4, 2, 1, spectral), nn.LeakyReLU(0.2)]
            res //= 2
            if with_attention and cfg.use_sa and res == sa_res:
                layers.append(SelfAttention2d(out_ch, cfg.attn_reduction, spectral=spectral))
            in_ch = out_ch
        self.net = nn.Sequential(*layers)
        self.out_features = in_ch * res * res

    def forward(self, x):
        return self.net(x).flatten(1)


class ImageDiscriminator(nn.Module):
    """Realness score for (image, label) pairs plus an optional age head.

    The label is tiled into K constant planes and concatenated to the image
    channels.  The age head shares the trunk weights but reads a pass with
    zeroed label planes: feeding the head the true label planes would let it
    classify the label from the planes alone, silencing the conditioning
    gradient the age game exists to provide.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.num_bins = cfg.num_bins
        self.use_dage = cfg.use_dage
        self.separate_age_trunk = cfg.separate_age_trunk
        spectral = cfg.use_sa
        self.trunk = _ConvTrunk(cfg, 1 + cfg.num_bins, with_attention=True)
        self.realness = linear(self.trunk.out_features, 1, spectral)
        if cfg.use_dage:
            if cfg.separate_age_trunk:
                self.age_trunk = _ConvTrunk(cfg, 1, with_attention=True)
                self.age_head = linear(self.age_trunk.out_features, cfg.num_bins, spectral)
            else:
                self.age_head = linear(self.trunk.out_features, cfg.num_bins, spectral)

    def _with_planes(self, x, label):
        planes = label[:, :, None, None].expand(-1, -1, x.shape[2], x.shape[3])
        return torch.cat([x, planes], dim=1)

    def forward(self, x, label):
        score = torch.sigmoid(self.realness(self.trunk(self._with_planes(x, label)))).squeeze(-1)
        if not self.use_dage:
            return score, None
        if self.separate_age_trunk:
            feats = self.age_trunk(x)
        else:
            feats = self.trunk(self._with_planes(x, torch.zeros_like(label)))
        return score, self.age_head(feats)


class BoneAgeModel(nn.Module):
    """Bundle of the five networks with shape-checked entry points."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.encoder = Encoder(cfg)
        self.generator = Generator(cfg)
        self.latent_disc = LatentDiscriminator(cfg)
        self.image_disc = ImageDiscriminator(cfg)

    def _check_images(self, x):
        s = self.cfg.image_size
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[2] != s or x.shape[3] != s:
            raise DimensionError(
                f"expected images of shape (B, 1, {s}, {s}), got {tuple(x.shape)}")

    def _check_labels(self, label, batch):
        if label.ndim != 2 or label.shape[1] != self.cfg.num_bins:
            raise DimensionError(
                f"expected labels of shape (B, {self.cfg.num_bins}), got {tuple(label.shape)}")
        if label.shape[0] != batch:
            raise DimensionError(
                f"batch mismatch: {batch} images vs {label.shape[0]} labels")

    def encode(self, x):
        self._check_images(x)
        return self.encoder(x)

    def generate(self, z, label):
        if z.ndim != 2 or z.shape[1] != self.cfg.latent_dim:
            raise DimensionError(
                f"expected codes of shape (B, {self.cfg.latent_dim}), got {tuple(z.shape)}")
        self._check_labels(label, z.shape[0])
        return self.generator(z, label)

    def discriminate_identity(self, z):
        if z.ndim != 2 or z.shape[1] != self.cfg.latent_dim:
            raise DimensionError(
                f"expected codes of shape (B, {self.cfg.latent_dim}), got {tuple(z.shape)}")
        return self.latent_disc(z)

    def discriminate_image(self, x, label):
        self._check_images(x)
        self._check_labels(label, x.shape[0])
        return self.image_disc(x, label)


def init_parameters(model, seed):
    """Deterministic weight init: conv/linear weights N(0, 0.02), biases and
    attention gates zero, norm scales one, spectral u buffers random unit."""
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
                module.weight.normal_(0.0, 0.02, generator=gen)
                if module.bias is not None:
                    module.bias.zero_()
            elif isinstance(module, nn.InstanceNorm2d) and module.affine:
                module.weight.fill_(1.0)
                module.bias.zero_()
            elif isinstance(module, SelfAttention2d):
                module.gamma.zero_()
        for module in model.modules():
            if isinstance(module, SpectralMixin):
                u = torch.randn(module.u.shape, generator=gen)
                module.u.copy_(F.normalize(u, dim=0))
    return model


def build_model(cfg: ModelConfig, seed=0):
    """Construct the networks and deterministically initialize all weights."""
    return init_parameters(BoneAgeModel(cfg), seed)
