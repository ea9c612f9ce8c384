"""Gain-control normalization and its one-shot inverse.

Forward (GDN)::

    D_i = S_i / sqrt(sum_j w[j, i] * S_j**2 + b_i)

Inverse (IGDN)::

    F_i = P_i * sqrt(sum_j w[j, i] * P_j**2 + b_i)

The inverse is exact only when ``w == 0``; otherwise it is the multiplicative
counterpart used to map processed features back toward image space, not a
fixed-point solve of the forward map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstraintError, ShapeError
from .layers import Module
from .tensor import Tensor, channel_mix

B_MIN = 1e-6


@dataclass
class GainControlParams:
    """Coupling matrix ``w`` (C x C, w[j, i] feeds channel j into channel i) and offsets ``b``."""

    w: Tensor
    b: Tensor

    @classmethod
    def initial(cls, channels: int) -> "GainControlParams":
        w = 0.1 * np.eye(channels) + 0.01
        return cls(Tensor(w, requires_grad=True), Tensor(np.ones(channels), requires_grad=True))

    @classmethod
    def identity(cls, channels: int) -> "GainControlParams":
        return cls(Tensor(np.zeros((channels, channels)), requires_grad=True),
                   Tensor(np.ones(channels), requires_grad=True))

    @property
    def channels(self) -> int:
        return self.b.shape[0]

    def validate(self) -> None:
        c = self.channels
        if self.b.shape != (c,) or self.w.shape != (c, c):
            raise ConstraintError(f"w must be {c}x{c} and b length {c}; got {self.w.shape}, {self.b.shape}")
        if np.any(self.w.data < 0):
            raise ConstraintError(f"negative coupling weight (min {self.w.data.min():.3g})")
        if np.any(self.b.data < B_MIN):
            raise ConstraintError(f"offset below {B_MIN:g} (min {self.b.data.min():.3g})")


def _radicand(x: Tensor, params: GainControlParams) -> Tensor:
    params.validate()
    if x.ndim != 4 or x.shape[1] != params.channels:
        raise ShapeError(f"gain control expects {params.channels} channels, got shape {x.shape}")
    return channel_mix(x.square(), params.w) + params.b


def gdn_forward(s: Tensor, params: GainControlParams) -> Tensor:
    return s / _radicand(s, params).sqrt()


def igdn_forward(p: Tensor, params: GainControlParams) -> Tensor:
    return p * _radicand(p, params).sqrt()


def project_params(params: GainControlParams) -> GainControlParams:
    """Clamp in place to the feasible set (w >= 0, b >= B_MIN); returns ``params``."""
    np.maximum(params.w.data, 0.0, out=params.w.data)
    np.maximum(params.b.data, B_MIN, out=params.b.data)
    return params


class GDN(Module):
    inverse = False

    def __init__(self, channels: int):
        self.params = GainControlParams.initial(channels)

    def named_parameters(self, prefix: str = ""):
        yield f"{prefix}w", self.params.w
        yield f"{prefix}b", self.params.b

    def forward(self, x: Tensor) -> Tensor:
        return igdn_forward(x, self.params) if self.inverse else gdn_forward(x, self.params)

    def project(self) -> None:
        project_params(self.params)

    def set_identity(self) -> None:
        self.params.w.data[...] = 0.0
        self.params.b.data[...] = 1.0


class IGDN(GDN):
    inverse = True
