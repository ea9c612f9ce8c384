"""Multi-phase disentangled-feature restoration network.

Layout of one phase::

    F ──► FDM (conv→GDN) x L ──► FAM (skip add → PM → CA → IGDN) x L ──┐
    │          │ skips (mirrored) ────────┘                            ├─► fusion ─► + F + residual_in
    └──► aux ResBlocks ────────────────────────────────────────────────┘

Cross-phase wiring: each phase adds its own input back to the fused result
and also the previous phase's fused result (``residual_in``); its own fused
result becomes the next phase's ``residual_in``. The whole network is
``tail(phases(head(x))) + x``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .config import NetworkConfig, derive_rng
from .errors import ConfigError, ShapeError
from .gain_control import GDN, IGDN
from .layers import ChannelAttention, Conv2d, Fusion, Module, ResBlock
from .tensor import Tensor


class FDLayer(Module):
    def __init__(self, channels: int, rng):
        self.conv = Conv2d(channels, channels, 3, rng=rng)
        self.gdn = GDN(channels)

    def forward(self, x: Tensor) -> Tensor:
        return self.gdn(self.conv(x))


class FALayer(Module):
    """Process module (3x3 conv + ReLU), channel attention, then inverse gain control."""

    def __init__(self, channels: int, reduction: int, rng):
        self.pm = Conv2d(channels, channels, 3, rng=rng)
        self.ca = ChannelAttention(channels, reduction, rng=rng)
        self.igdn = IGDN(channels)

    def forward(self, x: Tensor) -> Tensor:
        return self.igdn(self.ca(self.pm(x).relu()))


class FDM(Module):
    def __init__(self, channels: int, depth: int, rng):
        self.layers = [FDLayer(channels, rng) for _ in range(depth)]

    def forward(self, x: Tensor) -> tuple[Tensor, list[Tensor]]:
        skips = []
        for layer in self.layers:
            x = layer(x)
            skips.append(x)
        return x, skips


class FAM(Module):
    def __init__(self, channels: int, depth: int, reduction: int, rng):
        self.layers = [FALayer(channels, reduction, rng) for _ in range(depth)]

    def forward(self, d: Tensor, skips: list[Tensor]) -> Tensor:
        if len(skips) != len(self.layers):
            raise ConfigError(f"FAM has {len(self.layers)} layers but received {len(skips)} skips")
        x = d
        # last FDlayer output feeds the first FAlayer
        for layer, skip in zip(self.layers, reversed(skips)):
            x = layer(x + skip)
        return x


class PhaseOutput(NamedTuple):
    features: Tensor      # F_out, input of the next phase
    residual: Tensor      # fused branch output, carried to the next phase
    disentangled: Tensor  # final FDlayer output D (SVDO and diagnostics tap)


class Phase(Module):
    def __init__(self, config: NetworkConfig, rng):
        c = config.channels
        self.fdm = FDM(c, config.fd_layers, rng)
        self.fam = FAM(c, config.fd_layers, config.reduction, rng)
        self.aux = [ResBlock(c, rng=rng) for _ in range(config.aux_blocks)]
        self.fusion = Fusion(c, config.reduction, rng=rng)

    def forward(self, f: Tensor, residual_in: Tensor | None = None) -> PhaseOutput:
        d, skips = self.fdm(f)
        lower = self.fam(d, skips)
        upper = f
        for block in self.aux:
            upper = block(upper)
        fused = self.fusion(lower, upper)
        out = f + fused
        if residual_in is not None:
            out = out + residual_in
        return PhaseOutput(out, fused, d)


class FDRNet(Module):
    def __init__(self, config: NetworkConfig | None = None, seed: int = 0):
        self.config = config or NetworkConfig()
        rng = derive_rng(seed, "init")
        c = self.config.channels
        self.head = Conv2d(self.config.in_channels, c, 3, rng=rng)
        self.phases = [Phase(self.config, rng) for _ in range(self.config.phases)]
        self.tail = Conv2d(c, self.config.in_channels, 3, rng=rng)

    def forward(self, image: Tensor, taps: dict | None = None) -> tuple[Tensor, list[Tensor]]:
        """Restore ``image`` (N x 3 x H x W); returns (restored, per-phase FDM outputs).

        When ``taps`` is a dict it receives ``"pre_fdm"`` (phase inputs) and
        ``"post_fdm"`` (final FDlayer outputs), one entry per phase.
        """
        if image.ndim != 4 or image.shape[1] != self.config.in_channels:
            raise ShapeError(f"expected N x {self.config.in_channels} x H x W input, got {image.shape}")
        if min(image.shape[2:]) < 8:
            raise ShapeError(f"spatial extent must be at least 8, got {image.shape[2:]}")
        f = self.head(image)
        residual = None
        fdm_outputs = []
        for phase in self.phases:
            if taps is not None:
                taps.setdefault("pre_fdm", []).append(f)
            f, residual, d = phase(f, residual)
            fdm_outputs.append(d)
            if taps is not None:
                taps.setdefault("post_fdm", []).append(d)
        return self.tail(f) + image, fdm_outputs

    def gain_layers(self) -> list[GDN]:
        return [m for m in self.modules() if isinstance(m, GDN)]

    def project(self) -> None:
        for layer in self.gain_layers():
            layer.project()

    def set_identity(self) -> None:
        """Identity configuration of every block; the network then returns its input."""
        for phase in self.phases:
            for layer in phase.fdm.layers:
                layer.conv.set_identity()
                layer.gdn.set_identity()
            for layer in phase.fam.layers:
                layer.pm.set_identity()
                layer.ca.set_saturated()
                layer.igdn.set_identity()
            for block in phase.aux:
                block.set_zero()
            phase.fusion.set_zero()
        self.tail.set_zero()


def fdm_forward(features: Tensor, params: FDM) -> tuple[Tensor, list[Tensor]]:
    return params(features)


def fam_forward(d: Tensor, skips: list[Tensor], params: FAM) -> Tensor:
    return params(d, skips)


def phase_forward(features: Tensor, residual_in: Tensor | None, params: Phase) -> PhaseOutput:
    return params(features, residual_in)


def network_forward(image: Tensor, params: FDRNet) -> tuple[Tensor, list[Tensor]]:
    return params(image)


def _conv_count(cin: int, cout: int, k: int) -> int:
    return cout * cin * k * k + cout


def _ca_count(c: int, r: int) -> int:
    return _conv_count(c, c // r, 1) + _conv_count(c // r, c, 1)


def phase_params(config: NetworkConfig) -> int:
    c, r = config.channels, config.reduction
    gain = c * c + c
    fdm = config.fd_layers * (_conv_count(c, c, 3) + gain)
    fam = config.fd_layers * (_conv_count(c, c, 3) + _ca_count(c, r) + gain)
    aux = config.aux_blocks * 2 * _conv_count(c, c, 3)
    fusion = _ca_count(2 * c, r) + _conv_count(2 * c, c, 1)
    return fdm + fam + aux + fusion


def count_params(config: NetworkConfig, phases: int | None = None) -> int:
    """Exact learnable-scalar count, affine in the phase count.

    ``phases`` overrides ``config.phases`` (0 gives the head + tail alone).
    """
    p = config.phases if phases is None else phases
    if p < 0:
        raise ConfigError(f"phase count must be >= 0, got {p}")
    c, cin = config.channels, config.in_channels
    return _conv_count(cin, c, 3) + _conv_count(c, cin, 3) + p * phase_params(config)


def to_batch(images: np.ndarray) -> Tensor:
    """H x W x 3 (or N x H x W x 3) images on the 0-255 scale -> N x 3 x H x W on [0, 1]."""
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    return Tensor(arr.transpose(0, 3, 1, 2) / 255.0)


def from_batch(t: Tensor) -> np.ndarray:
    """Inverse of :func:`to_batch`, clipped to [0, 255] and rounded like an 8-bit file."""
    return np.clip(np.round(t.data.transpose(0, 2, 3, 1) * 255.0), 0, 255)
