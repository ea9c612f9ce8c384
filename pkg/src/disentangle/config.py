"""Configuration records and the single home of numeric defaults.

CLI flags, docs and library code all read their defaults from here.
"""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError

# architecture
PHASES = 6
CHANNELS = 32
FD_LAYERS = 3
# 11 ResBlocks per phase puts the default network at ~1.63M parameters
AUX_BLOCKS = 11
REDUCTION = 4
IN_CHANNELS = 3

# optimisation
LR0 = 1e-4
LR_DECAY = 0.8
LR_DECAY_INTERVAL = 9000
BATCH_SIZE = 8          # the reference protocol used 28
PAPER_BATCH_SIZE = 28
BETA = 1e-5
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
ITERATIONS = 2000
CHECKPOINT_INTERVAL = 1000
VAL_INTERVAL = 500

# data
PATCH_SIZE = 63
SEED = 0


@dataclass(frozen=True)
class NetworkConfig:
    phases: int = PHASES
    channels: int = CHANNELS
    fd_layers: int = FD_LAYERS
    aux_blocks: int = AUX_BLOCKS
    reduction: int = REDUCTION
    in_channels: int = IN_CHANNELS

    def __post_init__(self):
        if self.phases < 1:
            raise ConfigError(f"phases must be >= 1, got {self.phases}")
        if self.fd_layers < 1:
            raise ConfigError(f"fd_layers must be >= 1, got {self.fd_layers}")
        if self.aux_blocks < 0:
            raise ConfigError(f"aux_blocks must be >= 0, got {self.aux_blocks}")
        if self.reduction < 1 or self.channels < self.reduction:
            raise ConfigError(f"need channels >= reduction >= 1, got {self.channels}, {self.reduction}")
        if self.channels % self.reduction:
            raise ConfigError(f"reduction {self.reduction} must divide channels {self.channels}")
        if self.in_channels < 1:
            raise ConfigError(f"in_channels must be >= 1, got {self.in_channels}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = LR0
    lr_decay: float = LR_DECAY
    decay_interval: int = LR_DECAY_INTERVAL
    batch_size: int = BATCH_SIZE
    beta: float = BETA
    iterations: int = ITERATIONS
    seed: int = SEED
    checkpoint_interval: int = CHECKPOINT_INTERVAL
    val_interval: int = VAL_INTERVAL

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ConfigError(f"lr0 must be positive, got {self.lr0}")
        if not 0 < self.lr_decay < 1:
            raise ConfigError(f"lr_decay must lie in (0, 1), got {self.lr_decay}")
        if self.decay_interval < 1:
            raise ConfigError(f"decay_interval must be >= 1, got {self.decay_interval}")
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if self.batch_size < 1 or self.iterations < 0:
            raise ConfigError("batch_size must be >= 1 and iterations >= 0")
        if self.checkpoint_interval < 1 or self.val_interval < 1:
            raise ConfigError("checkpoint and validation intervals must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def derive_seed(seed: int, label: str, index: int = 0) -> int:
    """Deterministic 63-bit child seed named by (component label, index)."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), zlib.crc32(label.encode("utf-8")), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def derive_rng(seed: int, label: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, label, index))
