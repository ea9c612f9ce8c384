"""Deterministic hybrid-distortion synthesis and dataset manifests.

Images are H x W x 3 float arrays on the 0-255 scale. A :class:`DistortionSpec`
fully determines the distorted output of a clean image, so a manifest line is
enough to regenerate its distorted patch bit for bit.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from . import config as C
from .config import derive_rng, derive_seed
from .errors import ConfigError, DataError
from .jpeg import jpeg_artifacts

RECIPE_VERSION = "hybrid-v1"
DEFAULT_ORDER = ("rain", "blur", "noise", "jpeg")
SEVERITIES = ("mild", "moderate", "severe")
CUSTOM = "custom"

BLUR_RANGE = (0.0, 10.0)
NOISE_RANGE = (0.0, 50.0)
QUALITY_RANGE = (10, 100)
DENSITY_RANGE = (0.0, 1.0)
RAIN_ANGLE_RANGE = (-30.0, 30.0)
RAIN_LENGTH_RANGE = (5, 25)
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".ppm")


def _thirds(lo: float, hi: float) -> list[tuple[float, float]]:
    step = (hi - lo) / 3.0
    return [(lo, lo + step), (lo + step, lo + 2 * step), (lo + 2 * step, hi)]


# severity -> (blur, noise, quality, rain density) subranges; quality runs the other way
SEVERITY_RANGES = {
    name: {
        "blur_sigma": _thirds(*BLUR_RANGE)[i],
        "noise_sigma": _thirds(*NOISE_RANGE)[i],
        "jpeg_quality": (QUALITY_RANGE[1] - 30 * (i + 1), QUALITY_RANGE[1] - 30 * i),
        "rain_density": _thirds(*DENSITY_RANGE)[i],
    }
    for i, name in enumerate(SEVERITIES)
}


@dataclass(frozen=True)
class RainSpec:
    density: float
    angle: float = 0.0
    length: int = 15


@dataclass(frozen=True)
class DistortionSpec:
    blur_sigma: float = 0.0
    noise_sigma: float = 0.0
    jpeg_quality: int = 100
    rain: RainSpec | None = None
    severity: str = CUSTOM
    seed: int = 0
    order: tuple[str, ...] = DEFAULT_ORDER

    def validate(self) -> None:
        if not BLUR_RANGE[0] <= self.blur_sigma <= BLUR_RANGE[1]:
            raise ConfigError(f"blur_sigma {self.blur_sigma} outside {BLUR_RANGE}")
        if not NOISE_RANGE[0] <= self.noise_sigma <= NOISE_RANGE[1]:
            raise ConfigError(f"noise_sigma {self.noise_sigma} outside {NOISE_RANGE}")
        if not QUALITY_RANGE[0] <= self.jpeg_quality <= QUALITY_RANGE[1]:
            raise ConfigError(f"jpeg_quality {self.jpeg_quality} outside {QUALITY_RANGE}")
        if self.rain is not None:
            if not DENSITY_RANGE[0] <= self.rain.density <= DENSITY_RANGE[1]:
                raise ConfigError(f"rain density {self.rain.density} outside {DENSITY_RANGE}")
            if self.rain.length < 1:
                raise ConfigError(f"rain streak length must be >= 1, got {self.rain.length}")
        if sorted(self.order) != sorted(DEFAULT_ORDER):
            raise ConfigError(f"order must be a permutation of {DEFAULT_ORDER}, got {self.order}")
        if self.severity == CUSTOM:
            return
        if self.severity not in SEVERITY_RANGES:
            raise ConfigError(f"unknown severity {self.severity!r}")
        ranges = SEVERITY_RANGES[self.severity]
        for key in ("blur_sigma", "noise_sigma", "jpeg_quality"):
            lo, hi = ranges[key]
            if not lo <= getattr(self, key) <= hi:
                raise ConfigError(f"{key}={getattr(self, key)} outside the {self.severity} range [{lo}, {hi}]")
        if self.rain is not None:
            lo, hi = ranges["rain_density"]
            if not lo <= self.rain.density <= hi:
                raise ConfigError(f"rain density {self.rain.density} outside the {self.severity} range")


def sample_spec(severity: str, rng: np.random.Generator, seed: int, with_rain: bool = False) -> DistortionSpec:
    """Draw a spec uniformly from the parameter subranges of a severity class."""
    if severity not in SEVERITY_RANGES:
        raise ConfigError(f"unknown severity {severity!r}; expected one of {SEVERITIES}")
    r = SEVERITY_RANGES[severity]
    blur = float(rng.uniform(*r["blur_sigma"]))
    noise = float(rng.uniform(*r["noise_sigma"]))
    quality = int(rng.integers(r["jpeg_quality"][0], r["jpeg_quality"][1] + 1))
    rain = None
    if with_rain:
        rain = RainSpec(density=float(rng.uniform(*r["rain_density"])),
                        angle=float(rng.uniform(*RAIN_ANGLE_RANGE)),
                        length=int(rng.integers(RAIN_LENGTH_RANGE[0], RAIN_LENGTH_RANGE[1] + 1)))
    return DistortionSpec(blur, noise, quality, rain, severity, seed)


# -- operators -------------------------------------------------------------------


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps, radius ceil(3 sigma) (at least 1)."""
    radius = max(1, math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _filter_axis(img: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    r = len(taps) // 2
    pad = [(0, 0)] * img.ndim
    pad[axis] = (r, r)
    padded = np.pad(img, pad, mode="reflect")
    n = img.shape[axis]
    out = np.zeros_like(img)
    for t, weight in enumerate(taps):
        out += weight * np.take(padded, np.arange(t, t + n), axis=axis)
    return out


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with reflect padding; sigma 0 returns a copy."""
    if sigma < 0:
        raise ConfigError(f"blur sigma must be >= 0, got {sigma}")
    img = np.asarray(img, dtype=np.float64)
    if sigma == 0:
        return img.copy()
    taps = gaussian_kernel(sigma)
    return _filter_axis(_filter_axis(img, taps, 0), taps, 1)


def add_gaussian_noise(img: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    if sigma < 0:
        raise ConfigError(f"noise sigma must be >= 0, got {sigma}")
    img = np.asarray(img, dtype=np.float64)
    if sigma == 0:
        return img.copy()
    rng = np.random.default_rng(seed)
    return np.clip(img + sigma * rng.standard_normal(img.shape), 0.0, 255.0)


def _shift(a: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Translate a 2-D array by (dy, dx), filling with zeros."""
    out = np.zeros_like(a)
    h, w = a.shape
    ys, yd = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xs, xd = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    if ys.start < ys.stop and xs.start < xs.stop:
        out[yd, xd] = a[ys, xs]
    return out


def rain_streaks(img: np.ndarray, density: float, angle: float, length: int, seed: int) -> np.ndarray:
    """Overlay procedural rain: sparse bright seeds smeared along ``angle``.

    ``angle`` is in degrees from vertical. Seeds occur with probability
    ``0.04 * density`` per pixel; the streak layer is screen-blended, so the
    output is never darker than the input.
    """
    if not 0.0 <= density <= 1.0:
        raise ConfigError(f"rain density must lie in [0, 1], got {density}")
    img = np.asarray(img, dtype=np.float64)
    if density == 0:
        return img.copy()
    rng = np.random.default_rng(seed)
    h, w = img.shape[:2]
    seeds = (rng.random((h, w)) < 0.04 * density) * rng.uniform(0.5, 1.0, (h, w))
    theta = math.radians(angle)
    streak = np.zeros((h, w))
    offsets = np.arange(length) - (length - 1) / 2.0
    for t in offsets:
        streak += _shift(seeds, int(round(t * math.cos(theta))), int(round(t * math.sin(theta))))
    layer = np.clip(streak * (255.0 * 0.6), 0.0, 255.0)[..., None]
    return 255.0 - (255.0 - img) * (255.0 - layer) / 255.0


def synthesize_pair(clean: np.ndarray, spec: DistortionSpec) -> tuple[np.ndarray, np.ndarray]:
    """Apply the spec's operators in ``spec.order``; returns (distorted, clean).

    Operators at their identity settings (sigma 0, quality 100, density 0 or
    no rain) are skipped, so an all-identity spec returns the input unchanged.
    """
    spec.validate()
    clean = np.asarray(clean, dtype=np.float64)
    out = clean
    for step in spec.order:
        if step == "rain" and spec.rain is not None and spec.rain.density > 0:
            r = spec.rain
            out = rain_streaks(out, r.density, r.angle, r.length, derive_seed(spec.seed, "rain"))
        elif step == "blur" and spec.blur_sigma > 0:
            out = gaussian_blur(out, spec.blur_sigma)
        elif step == "noise" and spec.noise_sigma > 0:
            out = add_gaussian_noise(out, spec.noise_sigma, derive_seed(spec.seed, "noise"))
        elif step == "jpeg" and spec.jpeg_quality < 100:
            out = jpeg_artifacts(out, spec.jpeg_quality)
    return out, clean


# -- image I/O ---------------------------------------------------------------------


def load_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.float64)
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc


def save_image(path, img: np.ndarray) -> None:
    arr = np.clip(np.round(np.asarray(img, dtype=np.float64)), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def quantize(img: np.ndarray) -> np.ndarray:
    """Round to the 8-bit grid exactly as :func:`save_image` stores it."""
    return np.clip(np.round(img), 0, 255)


# -- manifests ---------------------------------------------------------------------


@dataclass
class ManifestEntry:
    index: int
    clean: str
    distorted: str
    spec: DistortionSpec
    source: str = ""
    origin: tuple[int, int] = (0, 0)


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    seed: int = 0
    recipe: str = RECIPE_VERSION
    root: Path | None = None

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() or self.root is None else self.root / p

    def by_severity(self) -> dict[str, list[ManifestEntry]]:
        groups: dict[str, list[ManifestEntry]] = {}
        for e in self.entries:
            groups.setdefault(e.spec.severity, []).append(e)
        return groups


# field order of one manifest record
MANIFEST_FIELDS = ("index", "clean", "distorted", "source", "origin_y", "origin_x", "severity", "seed",
                   "blur_sigma", "noise_sigma", "jpeg_quality", "rain_density", "rain_angle", "rain_length",
                   "order")


def _entry_record(e: ManifestEntry) -> dict[str, str]:
    s, rain = e.spec, e.spec.rain
    return {
        "index": str(e.index), "clean": e.clean, "distorted": e.distorted, "source": e.source,
        "origin_y": str(e.origin[0]), "origin_x": str(e.origin[1]), "severity": s.severity,
        "seed": str(s.seed), "blur_sigma": repr(float(s.blur_sigma)), "noise_sigma": repr(float(s.noise_sigma)),
        "jpeg_quality": str(s.jpeg_quality),
        "rain_density": "none" if rain is None else repr(float(rain.density)),
        "rain_angle": "none" if rain is None else repr(float(rain.angle)),
        "rain_length": "none" if rain is None else str(rain.length),
        "order": ",".join(s.order),
    }


def format_manifest(m: DatasetManifest) -> str:
    lines = [f"# recipe={m.recipe} seed={m.seed} count={len(m.entries)}",
             "# fields=" + ",".join(MANIFEST_FIELDS)]
    for e in m.entries:
        rec = _entry_record(e)
        for key, value in rec.items():
            if any(ch.isspace() for ch in value) or "=" in value:
                raise DataError(f"manifest value for {key!r} contains whitespace or '=': {value!r}")
        lines.append(" ".join(f"{k}={rec[k]}" for k in MANIFEST_FIELDS))
    return "\n".join(lines) + "\n"


def write_manifest(m: DatasetManifest, path) -> None:
    Path(path).write_text(format_manifest(m), encoding="utf-8")


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    m = DatasetManifest(root=path.parent)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line[1:].split():
                key, _, value = token.partition("=")
                if key == "recipe":
                    m.recipe = value
                elif key == "seed":
                    m.seed = int(value)
            continue
        try:
            rec = dict(token.split("=", 1) for token in line.split())
            rain = None
            if rec["rain_density"] != "none":
                rain = RainSpec(float(rec["rain_density"]), float(rec["rain_angle"]), int(rec["rain_length"]))
            spec = DistortionSpec(float(rec["blur_sigma"]), float(rec["noise_sigma"]), int(rec["jpeg_quality"]),
                                  rain, rec["severity"], int(rec["seed"]), tuple(rec["order"].split(",")))
            m.entries.append(ManifestEntry(int(rec["index"]), rec["clean"], rec["distorted"], spec,
                                           rec.get("source", ""), (int(rec["origin_y"]), int(rec["origin_x"]))))
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: malformed manifest record ({exc})") from exc
    return m


def regenerate(m: DatasetManifest, entry: ManifestEntry) -> np.ndarray:
    """Recompute an entry's distorted patch (8-bit quantized) from its clean file."""
    clean = load_image(m.resolve(entry.clean))
    return quantize(synthesize_pair(clean, entry.spec)[0])


def list_images(clean_dir) -> list[Path]:
    d = Path(clean_dir)
    if not d.is_dir():
        raise DataError(f"clean directory {d} does not exist")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)
    if not files:
        raise DataError(f"no source images found in {d}")
    return files


def build_dataset(clean_dir, out_dir, count: int, severity: str = "moderate", patch_size: int = C.PATCH_SIZE,
                  seed: int = C.SEED, with_rain: bool = False, spec_override: dict | None = None) -> DatasetManifest:
    """Sample ``count`` patch pairs from the images in ``clean_dir``.

    Writes ``clean/NNNNN.png``, ``distorted/NNNNN.png`` and ``manifest.txt``
    under ``out_dir``. Entry ``i`` draws its source image, patch origin and
    spec from a generator derived from ``(seed, i)``, so entries do not depend
    on each other. ``spec_override`` replaces sampled spec fields (and marks
    the entries ``custom`` unless it sets ``severity``), e.g. for noise-only
    sets.
    """
    if patch_size < 16:
        raise ConfigError(f"patch_size must be >= 16, got {patch_size}")
    if count < 0:
        raise ConfigError(f"count must be >= 0, got {count}")
    sources = list_images(clean_dir)
    images = {}
    usable = []
    for p in sources:
        img = load_image(p)
        if img.shape[0] >= patch_size and img.shape[1] >= patch_size:
            images[p] = img
            usable.append(p)
    if not usable:
        raise DataError(f"no image in {clean_dir} is at least {patch_size}x{patch_size}")

    out = Path(out_dir)
    (out / "clean").mkdir(parents=True, exist_ok=True)
    (out / "distorted").mkdir(parents=True, exist_ok=True)
    manifest = DatasetManifest(seed=seed, root=out)
    for i in range(count):
        rng = derive_rng(seed, "dataset", i)
        src = usable[int(rng.integers(len(usable)))]
        img = images[src]
        y = int(rng.integers(img.shape[0] - patch_size + 1))
        x = int(rng.integers(img.shape[1] - patch_size + 1))
        spec = sample_spec(severity, rng, derive_seed(seed, "distortion", i), with_rain)
        if spec_override:
            fields = dict(spec_override)
            fields.setdefault("severity", CUSTOM)
            spec = replace(spec, **fields)
        patch = img[y:y + patch_size, x:x + patch_size]
        distorted, _ = synthesize_pair(patch, spec)
        name = f"{i:05d}.png"
        save_image(out / "clean" / name, patch)
        save_image(out / "distorted" / name, distorted)
        manifest.entries.append(ManifestEntry(i, f"clean/{name}", f"distorted/{name}", spec,
                                              src.name, (y, x)))
    write_manifest(manifest, out / "manifest.txt")
    return manifest


def load_pairs(m: DatasetManifest) -> tuple[np.ndarray, np.ndarray]:
    """Stack (distorted, clean) images of a manifest; missing files are listed in the error."""
    missing = [str(m.resolve(rel)) for e in m.entries for rel in (e.distorted, e.clean)
               if not os.path.exists(m.resolve(rel))]
    if missing:
        raise DataError("missing dataset files: " + ", ".join(missing))
    distorted = np.stack([load_image(m.resolve(e.distorted)) for e in m.entries]) if m.entries else np.empty((0,))
    clean = np.stack([load_image(m.resolve(e.clean)) for e in m.entries]) if m.entries else np.empty((0,))
    return distorted, clean


