"""Spectral normalization via power iteration.

`spectral_normalize` is the standalone (numpy) routine used for
verification; the torch layers in `networks` keep a persistent left
singular-vector estimate `u` as a buffer and re-estimate sigma from it on
every forward without mutating it, so network evaluation stays pure.  The
trainer advances every `u` exactly once per optimization step.
"""

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractError

SIGMA_FLOOR = 1e-12
_NORM_TINY = 1e-20


def spectral_normalize(weight, u, n_iter=1):
    """Estimate the top singular value of `weight` (m x n) by power iteration.

    Returns (weight / sigma, updated unit u, sigma).  A zero matrix keeps u
    unchanged and clamps sigma at the 1e-12 floor, yielding a zero normalized
    matrix.
    """
    if n_iter < 1:
        raise ContractError(f"n_iter must be >= 1, got {n_iter}")
    w = np.asarray(weight, dtype=np.float64)
    if w.ndim != 2:
        raise ContractError(f"weight must be 2-D, got shape {w.shape}")
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    if u.shape[0] != w.shape[0]:
        raise ContractError(f"u length {u.shape[0]} != weight rows {w.shape[0]}")

    v = None
    for _ in range(n_iter):
        v_raw = w.T @ u
        v_norm = np.linalg.norm(v_raw)
        if v_norm < _NORM_TINY:
            return np.zeros_like(w), u, SIGMA_FLOOR
        v = v_raw / v_norm
        u_raw = w @ v
        u_norm = np.linalg.norm(u_raw)
        if u_norm < _NORM_TINY:
            return np.zeros_like(w), u, SIGMA_FLOOR
        u = u_raw / u_norm
    sigma = float(u @ w @ v)
    sigma = max(sigma, SIGMA_FLOOR)
    return w / sigma, u, sigma


def _flat_weight(weight):
    # conv kernels are reshaped to out_channels x rest
    return weight.reshape(weight.shape[0], -1)


def _sigma_estimate(weight, u):
    """Differentiable sigma from the stored u (u itself is treated as data)."""
    w = _flat_weight(weight)
    v = F.normalize(w.t() @ u, dim=0, eps=_NORM_TINY)
    sigma = torch.clamp(u @ (w @ v), min=SIGMA_FLOOR)
    return sigma


@torch.no_grad()
def _power_iteration_step(weight, u):
    w = _flat_weight(weight)
    v = F.normalize(w.t() @ u, dim=0, eps=_NORM_TINY)
    return F.normalize(w @ v, dim=0, eps=_NORM_TINY)


class SpectralMixin:
    """Adds a persistent u buffer and sigma-scaled weight to a conv/linear."""

    def _init_spectral(self):
        self.register_buffer("u", F.normalize(torch.randn(self.weight.shape[0]), dim=0))

    def scaled_weight(self):
        return self.weight / _sigma_estimate(self.weight, self.u)

    def update_u(self):
        self.u.copy_(_power_iteration_step(self.weight, self.u))


class SNConv2d(SpectralMixin, nn.Conv2d):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._init_spectral()

    def forward(self, x):
        return self._conv_forward(x, self.scaled_weight(), self.bias)


class SNLinear(SpectralMixin, nn.Linear):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._init_spectral()

    def forward(self, x):
        return F.linear(x, self.scaled_weight(), self.bias)


def conv2d(in_ch, out_ch, kernel, stride, padding, spectral=False):
    cls = SNConv2d if spectral else nn.Conv2d
    return cls(in_ch, out_ch, kernel, stride=stride, padding=padding)


def linear(in_f, out_f, spectral=False):
    cls = SNLinear if spectral else nn.Linear
    return cls(in_f, out_f)


def update_all_u(module):
    """Advance every spectral-norm u in `module` by one power iteration."""
    for m in module.modules():
        if isinstance(m, SpectralMixin):
            m.update_u()
