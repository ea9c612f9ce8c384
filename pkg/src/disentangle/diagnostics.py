"""Interpretability probes: channel correlation around the FDM and per-distortion channel responses.

Both probes read features at two taps of one phase (phase index 0 by
default): ``pre_fdm`` is the phase input, ``post_fdm`` the output of its last
FDlayer.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plotting
from .config import derive_seed
from .errors import ConfigError, DataError, ShapeError
from .network import FDRNet, to_batch
from .synth import add_gaussian_noise, gaussian_blur, quantize
from .jpeg import jpeg_artifacts
from .tensor import Tensor, no_grad

DISTORTIONS = ("blur", "noise", "jpeg")
LEVELS = tuple(range(1, 11))
TOP_K = 5


@dataclass
class CorrelationReport:
    matrix: np.ndarray
    mean_abs_offdiag: float
    tap: str = ""
    constant_channels: list[int] = field(default_factory=list)


def channel_correlation(features, tap: str = "") -> CorrelationReport:
    """Pearson correlation between channels of an N x C x H x W feature.

    Each channel is flattened over batch and space. Channels with zero
    variance get an all-zero row and column (diagonal included) and are
    listed in ``constant_channels``. The mean is over the C(C-1)
    off-diagonal entries of ``|r|``.
    """
    f = features.data if isinstance(features, Tensor) else np.asarray(features, dtype=np.float64)
    if f.ndim != 4 or f.size == 0:
        raise ShapeError(f"expected a non-empty N x C x H x W feature, got shape {f.shape}")
    c = f.shape[1]
    rows = f.transpose(1, 0, 2, 3).reshape(c, -1)
    centered = rows - rows.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.einsum("ij,ij->i", centered, centered))
    scale = np.max(np.abs(rows), axis=1)
    constant = norms <= 1e-12 * np.sqrt(rows.shape[1]) * np.maximum(scale, 1e-300)
    safe = np.where(constant, 1.0, norms)
    unit = centered / safe[:, None]
    unit[constant] = 0.0
    r = np.clip(unit @ unit.T, -1.0, 1.0)
    r = 0.5 * (r + r.T)
    live = ~constant
    r[live, live] = 1.0
    off = ~np.eye(c, dtype=bool)
    mean = float(np.abs(r[off]).mean()) if c > 1 else 0.0
    return CorrelationReport(r, mean, tap, [int(i) for i in np.flatnonzero(constant)])


def tap_features(net: FDRNet, images: np.ndarray, phase: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """(pre-FDM, post-FDM) features of ``phase`` for 0-255 HWC images."""
    if not 0 <= phase < net.config.phases:
        raise ConfigError(f"phase must lie in [0, {net.config.phases}), got {phase}")
    taps: dict = {}
    with no_grad():
        net(to_batch(images), taps=taps)
    return taps["pre_fdm"][phase].data, taps["post_fdm"][phase].data


@dataclass
class CorrelationDelta:
    pre: np.ndarray       # per-patch mean |r| entering the FDM
    post: np.ndarray      # per-patch mean |r| leaving the FDM
    phase: int = 0
    pre_matrix: np.ndarray | None = None    # pooled over all patches
    post_matrix: np.ndarray | None = None

    @property
    def fraction_decreased(self) -> float:
        return float(np.mean(self.post < self.pre)) if len(self.pre) else 0.0


def correlation_delta(net: FDRNet, images: np.ndarray, phase: int = 0, batch_size: int = 16) -> CorrelationDelta:
    """Mean |off-diagonal| correlation before and after the FDM of ``phase``, per patch."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[None]
    pre, post, pre_all, post_all = [], [], [], []
    for start in range(0, len(images), batch_size):
        a, b = tap_features(net, images[start:start + batch_size], phase)
        pre_all.append(a)
        post_all.append(b)
        for i in range(len(a)):
            pre.append(channel_correlation(a[i:i + 1]).mean_abs_offdiag)
            post.append(channel_correlation(b[i:i + 1]).mean_abs_offdiag)
    delta = CorrelationDelta(np.array(pre), np.array(post), phase)
    if pre_all:
        delta.pre_matrix = channel_correlation(np.concatenate(pre_all), "pre_fdm").matrix
        delta.post_matrix = channel_correlation(np.concatenate(post_all), "post_fdm").matrix
    return delta


# -- channel responses ---------------------------------------------------------------


def level_parameter(distortion: str, level: int) -> float:
    """Parameter of level ``level``: blur sigma = level, noise sigma = 5 level, quality = 105 - 10 level.

    Level 0 is the identity end of every grid (sigma 0, quality 100).
    """
    if level < 0:
        raise ConfigError(f"level must be >= 0, got {level}")
    if distortion == "blur":
        return float(level)
    if distortion == "noise":
        return 5.0 * level
    if distortion == "jpeg":
        return float(min(100, 105 - 10 * level))
    raise ConfigError(f"unknown distortion {distortion!r}; expected one of {DISTORTIONS}")


def apply_level(img: np.ndarray, distortion: str, level: int, seed: int = 0) -> np.ndarray:
    """Single-distortion probe input on the 8-bit grid; identity-end parameters leave ``img`` untouched."""
    value = level_parameter(distortion, level)
    if distortion == "blur":
        out = gaussian_blur(img, value) if value > 0 else img
    elif distortion == "noise":
        out = add_gaussian_noise(img, value, seed) if value > 0 else img
    else:
        out = jpeg_artifacts(img, int(value)) if value < 100 else img
    return quantize(out)


@dataclass
class ResponseProfile:
    distortion: str
    level: int
    parameter: float
    response: np.ndarray  # per-channel mean |activation|, length C


def channel_response_profile(net: FDRNet, distortion: str, probes: np.ndarray, levels=LEVELS,
                             phase: int = 0, seed: int = 0) -> list[ResponseProfile]:
    """Per-channel mean |post-FDM activation| for each level of one distortion type."""
    probes = np.asarray(probes, dtype=np.float64)
    if probes.ndim == 3:
        probes = probes[None]
    if len(probes) == 0:
        raise DataError("probe set is empty")
    out = []
    for level in levels:
        inputs = np.stack([apply_level(p, distortion, level, derive_seed(seed, f"probe-{distortion}", 1000 * level + i))
                           for i, p in enumerate(probes)])
        acc = None
        for start in range(0, len(inputs), 16):
            _, post = tap_features(net, inputs[start:start + 16], phase)
            s = np.abs(post).sum(axis=(0, 2, 3))
            acc = s if acc is None else acc + s
        count = len(inputs) * probes.shape[1] * probes.shape[2]
        out.append(ResponseProfile(distortion, int(level), level_parameter(distortion, level), acc / count))
    return out


def top_channels(response: np.ndarray, k: int = TOP_K) -> frozenset[int]:
    """Indices of the ``k`` largest responses (ties go to the lower index)."""
    order = np.argsort(-np.asarray(response), kind="stable")
    return frozenset(int(i) for i in order[:k])


def level_invariant(profiles: list[ResponseProfile], levels=range(3, 11), k: int = TOP_K) -> bool:
    sets = {top_channels(p.response, k) for p in profiles if p.level in levels}
    return len(sets) == 1


def type_top_channels(profiles: list[ResponseProfile], levels=range(3, 11), k: int = TOP_K) -> frozenset[int]:
    """Top-``k`` channels of one distortion type, from its response averaged over ``levels``."""
    chosen = [p.response for p in profiles if p.level in levels]
    if not chosen:
        raise DataError("no profiles at the requested levels")
    return top_channels(np.mean(chosen, axis=0), k)


# -- graymap heat maps ---------------------------------------------------------------


def heatmap_bytes(matrix: np.ndarray) -> bytes:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or not np.all(np.isfinite(m)):
        raise ShapeError("heat map needs a finite 2-D matrix")
    pix = np.clip(np.round((m + 1.0) * 127.5), 0, 255).astype(np.uint8)
    return f"P5\n{m.shape[1]} {m.shape[0]}\n255\n".encode("ascii") + pix.tobytes()


def render_heatmap(matrix: np.ndarray, path) -> Path:
    """Write ``matrix`` as a binary PGM, mapping [-1, 1] linearly onto [0, 255]."""
    path = Path(path)
    try:
        path.write_bytes(heatmap_bytes(matrix))
    except OSError as exc:
        raise DataError(f"cannot write heat map {path}: {exc}") from exc
    return path


def read_pgm(path) -> np.ndarray:
    """Pixels of a binary (P5, 8-bit) PGM as a uint8 array."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    parts = blob.split(maxsplit=4)
    if len(parts) < 4 or parts[0] != b"P5" or parts[3] != b"255":
        raise DataError(f"{path} is not an 8-bit binary PGM")
    w, h = int(parts[1]), int(parts[2])
    pix = blob[len(blob) - w * h:]
    return np.frombuffer(pix, dtype=np.uint8).reshape(h, w)


def pgm_to_matrix(pixels: np.ndarray) -> np.ndarray:
    """Inverse of the heat-map mapping, back onto [-1, 1]."""
    return np.asarray(pixels, dtype=np.float64) / 127.5 - 1.0


# -- CSV reports ---------------------------------------------------------------------

CORRELATION_COLUMNS = ("patch", "pre_mean_abs_r", "post_mean_abs_r", "decreased")


def write_correlation_csv(delta: CorrelationDelta, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CORRELATION_COLUMNS)
        for i, (a, b) in enumerate(zip(delta.pre, delta.post)):
            w.writerow([i, repr(float(a)), repr(float(b)), int(b < a)])


def write_profiles_csv(profiles: list[ResponseProfile], path) -> None:
    """Columns: distortion, level, parameter, top5, ch0 .. ch{C-1}."""
    c = len(profiles[0].response) if profiles else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["distortion", "level", "parameter", "top5"] + [f"ch{i}" for i in range(c)])
        for p in profiles:
            top = " ".join(str(i) for i in sorted(top_channels(p.response)))
            w.writerow([p.distortion, p.level, repr(p.parameter), top] + [repr(float(v)) for v in p.response])


@dataclass
class DiagnosticsSummary:
    delta: CorrelationDelta
    profiles: list[ResponseProfile]
    invariant: dict[str, bool]
    blur_noise_differ: bool

    def lines(self) -> list[str]:
        d = self.delta
        out = [f"phase {d.phase}: pre-FDM mean |r| {d.pre.mean():.4f}, post-FDM mean |r| {d.post.mean():.4f}, "
               f"decreased on {100 * d.fraction_decreased:.1f}% of {len(d.pre)} patches"]
        for kind, ok in self.invariant.items():
            out.append(f"{kind}: top-{TOP_K} channel set invariant over levels 3-10: {'yes' if ok else 'no'}")
        out.append(f"blur vs noise top-{TOP_K} sets differ: {'yes' if self.blur_noise_differ else 'no'}")
        return out


def run_diagnostics(net: FDRNet, patches: np.ndarray, probes: np.ndarray, out_dir=None, phase: int = 0,
                    seed: int = 0, levels=LEVELS, figure: bool = True) -> DiagnosticsSummary:
    """Correlation delta on ``patches`` and response profiles on ``probes``; optionally write reports."""
    delta = correlation_delta(net, patches, phase)
    profiles = []
    for kind in DISTORTIONS:
        profiles.extend(channel_response_profile(net, kind, probes, levels, phase, seed))
    by_kind = {k: [p for p in profiles if p.distortion == k] for k in DISTORTIONS}
    invariant = {k: level_invariant(v) for k, v in by_kind.items()}
    differ = type_top_channels(by_kind["blur"]) != type_top_channels(by_kind["noise"])
    summary = DiagnosticsSummary(delta, profiles, invariant, differ)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_correlation_csv(delta, out / "correlation.csv")
        write_profiles_csv(profiles, out / "profiles.csv")
        if delta.pre_matrix is not None:
            render_heatmap(delta.pre_matrix, out / "corr_pre.pgm")
            render_heatmap(delta.post_matrix, out / "corr_post.pgm")
        (out / "summary.txt").write_text("\n".join(summary.lines()) + "\n")
        if figure:
            if delta.pre_matrix is not None:
                plotting.plot_correlation_pair(delta.pre_matrix, delta.post_matrix, out / "correlation.png")
            plotting.plot_response_profiles(profiles, out / "profiles.png")
    return summary
