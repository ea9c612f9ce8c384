"""Shared fixtures: clean source images and the session-wide toy training runs."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from disentangle.config import NetworkConfig, TrainConfig
from disentangle.synth import build_dataset
from disentangle.train import TrainResult, train

import acceptance_report

# Disjoint source pools so held-out patches never share an image with training.
TRAIN_SOURCES = ("astronaut", "rocket", "immunohistochemistry", "hubble_deep_field")
TEST_SOURCES = ("coffee", "chelsea")

TOY_NET = NetworkConfig(phases=2, channels=8, fd_layers=3, aux_blocks=2, reduction=4)
TOY_LR = 1e-3


def _write_sources(names, directory: Path) -> Path:
    from skimage import data

    directory.mkdir(parents=True, exist_ok=True)
    for name in names:
        Image.fromarray(getattr(data, name)()).save(directory / f"{name}.png")
    return directory


@pytest.fixture(scope="session")
def source_dirs(tmp_path_factory) -> tuple[Path, Path]:
    root = tmp_path_factory.mktemp("sources")
    return _write_sources(TRAIN_SOURCES, root / "train"), _write_sources(TEST_SOURCES, root / "test")


@pytest.fixture(scope="session")
def small_clean_dir(tmp_path_factory) -> Path:
    """Two photographs, enough for quick dataset tests."""
    return _write_sources(("coffee", "chelsea"), tmp_path_factory.mktemp("small_sources"))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@dataclass
class ToyRun:
    result: TrainResult
    test_manifest: object
    seconds: float


def _toy_run(tmp_path_factory, source_dirs, label: str, severity: str, noise_only: float | None,
             test_count: int = 100) -> ToyRun:
    train_dir, test_dir = source_dirs
    root = tmp_path_factory.mktemp(label)
    override = None
    if noise_only is not None:
        override = {"blur_sigma": 0.0, "noise_sigma": noise_only, "jpeg_quality": 100, "rain": None}
    train_m = build_dataset(train_dir, root / "train", 500, severity, 63, seed=11, spec_override=override)
    test_m = build_dataset(test_dir, root / "test", test_count, severity, 63, seed=12, spec_override=override)
    cfg = TrainConfig(lr0=TOY_LR, batch_size=8, beta=1e-5, iterations=2000, seed=5,
                      checkpoint_interval=1000, val_interval=1000)
    start = time.perf_counter()
    result = train(TOY_NET, train_m, test_m, cfg, root / "run", figure=False)
    return ToyRun(result, test_m, time.perf_counter() - start)


@pytest.fixture(scope="session")
def noise_run(tmp_path_factory, source_dirs) -> ToyRun:
    """Toy network, 500 noise-only (sigma 25) patches, 2000 iterations of batch 8."""
    return _toy_run(tmp_path_factory, source_dirs, "noise_run", "moderate", 25.0)


@pytest.fixture(scope="session")
def hybrid_run(tmp_path_factory, source_dirs) -> ToyRun:
    """Toy network on mild hybrid distortions (blur + noise + JPEG), beta 1e-5."""
    return _toy_run(tmp_path_factory, source_dirs, "hybrid_run", "mild", None)


def pytest_terminal_summary(terminalreporter):
    lines = acceptance_report.summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
