"""Baseline-JPEG quantization artifacts without entropy coding.

RGB -> YCbCr (JFIF), chroma subsampling, 8x8 DCT, quantize/dequantize with
the standard tables scaled by the usual quality law, inverse DCT, chroma
upsampling, back to RGB. Only the lossy steps are simulated; no bitstream is
produced.

Chroma is subsampled 4:2:0 below ``FULL_CHROMA_QUALITY`` and kept at full
resolution (4:4:4) from there up, as high-quality encoder presets do; with
4:2:0 a quality-100 round trip of a saturated photo cannot get past ~40 dB.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

CHROMA_TABLE = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.float64)


def _dct_matrix(n: int = 8) -> np.ndarray:
    k = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    m = np.cos((2 * x + 1) * k * np.pi / (2 * n)) * np.sqrt(2.0 / n)
    m[0] /= np.sqrt(2.0)
    return m


DCT8 = _dct_matrix()
FULL_CHROMA_QUALITY = 90


def quant_table(base: np.ndarray, quality: int) -> np.ndarray:
    """Scale a base table: 5000/q below 50, else 200 - 2q; entries clamped to [1, 255]."""
    if not 1 <= quality <= 100:
        raise ConfigError(f"JPEG quality must lie in [1, 100], got {quality}")
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    return np.clip(np.floor((base * scale + 50) / 100), 1, 255)


def rgb_to_ycbcr(img: np.ndarray) -> np.ndarray:
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0
    return np.stack([y, cb, cr], axis=-1)


def ycbcr_to_rgb(img: np.ndarray) -> np.ndarray:
    y, cb, cr = img[..., 0], img[..., 1] - 128.0, img[..., 2] - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.stack([r, g, b], axis=-1)


def _blockwise(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    blocks = (plane - 128.0).reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)
    coef = DCT8 @ blocks @ DCT8.T
    coef = np.round(coef / table) * table
    rec = DCT8.T @ coef @ DCT8
    return rec.transpose(0, 2, 1, 3).reshape(h, w) + 128.0


def _pad_to(plane: np.ndarray, mult: int) -> np.ndarray:
    h, w = plane.shape
    return np.pad(plane, ((0, -h % mult), (0, -w % mult)), mode="edge")


def _upsample2(plane: np.ndarray) -> np.ndarray:
    """Triangle-filter 2x upsampling (samples at 3/4, 1/4 of their neighbours)."""
    p = np.pad(plane, 1, mode="edge")
    rows = np.empty((2 * plane.shape[0], p.shape[1]))
    rows[0::2] = 0.75 * p[1:-1] + 0.25 * p[:-2]
    rows[1::2] = 0.75 * p[1:-1] + 0.25 * p[2:]
    out = np.empty((rows.shape[0], 2 * plane.shape[1]))
    out[:, 0::2] = 0.75 * rows[:, 1:-1] + 0.25 * rows[:, :-2]
    out[:, 1::2] = 0.75 * rows[:, 1:-1] + 0.25 * rows[:, 2:]
    return out


def jpeg_artifacts(img: np.ndarray, quality: int, subsample: bool | None = None) -> np.ndarray:
    """Return ``img`` (H x W x 3, 0-255) after a simulated JPEG round trip.

    ``subsample`` forces 4:2:0 (True) or 4:4:4 (False); by default it follows
    the quality threshold.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    ycc = rgb_to_ycbcr(img)
    luma_q = quant_table(LUMA_TABLE, quality)
    chroma_q = quant_table(CHROMA_TABLE, quality)

    y = _pad_to(ycc[..., 0], 16)
    hp, wp = y.shape
    y = _blockwise(y, luma_q)
    chans = [y[:h, :w]]
    if subsample is None:
        subsample = quality < FULL_CHROMA_QUALITY
    for i in (1, 2):
        c = _pad_to(ycc[..., i], 16)
        if not subsample:
            chans.append(_blockwise(c, chroma_q)[:h, :w])
            continue
        sub = c.reshape(hp // 2, 2, wp // 2, 2).mean(axis=(1, 3))
        sub = _blockwise(_pad_to(sub, 8), chroma_q)[:hp // 2, :wp // 2]
        chans.append(_upsample2(sub)[:h, :w])
    return np.clip(ycbcr_to_rgb(np.stack(chans, axis=-1)), 0.0, 255.0)
