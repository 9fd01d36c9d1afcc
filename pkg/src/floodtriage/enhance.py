"""Contrast enhancement by histogram equalization.

The global method remaps each gray level v through the normalized cumulative
histogram: C(i) = sum_{j<=i} H(j), C'(i) = C(i)/N, h(v) = round((L-1)*C'(v)),
with round-half-up. Color images are equalized on an integer BT.601 luminance
channel and the RGB values rescaled proportionally with clamping.

A contrast-limited adaptive variant (CLAHE) is exposed as an experimental
option; it equalizes per grid tile with a clipped histogram and blends the
per-tile mappings bilinearly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractViolation


@dataclass(frozen=True)
class RasterImage:
    """8-bit image, grayscale (H, W) or RGB (H, W, 3), with L gray levels."""

    data: np.ndarray
    depth: int = 256

    def __post_init__(self):
        if self.data.dtype != np.uint8:
            raise ContractViolation("image data must be uint8")
        if self.data.ndim == 2:
            pass
        elif self.data.ndim == 3 and self.data.shape[2] == 3:
            pass
        else:
            raise ContractViolation(f"unsupported image shape {self.data.shape}")
        if self.data.size == 0:
            raise ContractViolation("image has zero pixels")
        if not (2 <= self.depth <= 256):
            raise ContractViolation("depth must be in [2, 256]")
        if int(self.data.max()) >= self.depth:
            raise ContractViolation(f"pixel value {int(self.data.max())} >= depth {self.depth}")

    @property
    def height_px(self) -> int:
        return self.data.shape[0]

    @property
    def width_px(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3


@dataclass(frozen=True)
class HistogramTables:
    """Histogram, cumulative counts, normalized CDF, and the level mapping."""

    histogram: np.ndarray   # (L,) int64 counts
    cumulative: np.ndarray  # (L,) int64, non-decreasing, last == N
    normalized: np.ndarray  # (L,) float64 in [0, 1], last == 1
    mapping: np.ndarray     # (L,) uint8-compatible ints in [0, L-1], monotone

    def __post_init__(self):
        c = self.cumulative
        if (np.diff(c) < 0).any():
            raise ContractViolation("cumulative histogram must be non-decreasing")
        if c[-1] != int(self.histogram.sum()):
            raise ContractViolation("cumulative total must equal pixel count")
        if abs(float(self.normalized[-1]) - 1.0) > 1e-12:
            raise ContractViolation("normalized cumulative histogram must end at 1")
        if (np.diff(self.mapping) < 0).any():
            raise ContractViolation("level mapping must be monotone non-decreasing")


def _round_half_up(values: np.ndarray) -> np.ndarray:
    return np.floor(values + 0.5).astype(np.int64)


def _channel_data(image: RasterImage, channel: int) -> np.ndarray:
    if channel < 0 or channel >= image.channels:
        raise ContractViolation(f"channel {channel} out of range for "
                                f"{image.channels}-channel image")
    return image.data if image.data.ndim == 2 else image.data[:, :, channel]


def compute_tables(image: RasterImage, channel: int = 0) -> HistogramTables:
    """Histogram, cumulative sum, normalized CDF, and gray-level mapping."""
    values = _channel_data(image, channel)
    n = values.size
    if n == 0:
        raise ContractViolation("cannot equalize a zero-pixel image")
    levels = image.depth
    histogram = np.bincount(values.ravel(), minlength=levels).astype(np.int64)
    cumulative = np.cumsum(histogram)
    normalized = cumulative / float(n)
    mapping = _round_half_up((levels - 1) * normalized)
    return HistogramTables(histogram=histogram, cumulative=cumulative,
                           normalized=normalized, mapping=mapping)


# Integer BT.601 luminance weights; 77 + 150 + 29 == 256.
_LUMA_WEIGHTS = (77, 150, 29)


def _luminance(rgb: np.ndarray) -> np.ndarray:
    r = rgb[:, :, 0].astype(np.uint32)
    g = rgb[:, :, 1].astype(np.uint32)
    b = rgb[:, :, 2].astype(np.uint32)
    w_r, w_g, w_b = _LUMA_WEIGHTS
    return ((w_r * r + w_g * g + w_b * b + 128) >> 8).astype(np.uint8)


def _rescale_rgb(rgb: np.ndarray, luma: np.ndarray, new_luma: np.ndarray,
                 levels: int) -> np.ndarray:
    scale = np.where(luma > 0, new_luma / np.maximum(luma, 1), 0.0)
    out = np.floor(rgb.astype(np.float64) * scale[:, :, np.newaxis] + 0.5)
    out = np.clip(out, 0, levels - 1).astype(np.uint8)
    # Black pixels carry no chroma; give them the remapped luminance directly.
    zero = luma == 0
    out[zero] = new_luma[zero, np.newaxis]
    return out


def equalize(image: RasterImage) -> RasterImage:
    """Globally equalize an image; dimensions and arrangement are unchanged."""
    if image.data.ndim == 2:
        tables = compute_tables(image)
        remapped = tables.mapping.astype(np.uint8)[image.data]
        return RasterImage(data=remapped, depth=image.depth)
    luma = _luminance(image.data)
    tables = compute_tables(RasterImage(data=luma, depth=image.depth))
    new_luma = tables.mapping.astype(np.uint8)[luma]
    return RasterImage(data=_rescale_rgb(image.data, luma, new_luma, image.depth),
                       depth=image.depth)


def _clipped_mapping(tile_values: np.ndarray, levels: int, clip_limit: float) -> np.ndarray:
    hist = np.bincount(tile_values.ravel(), minlength=levels).astype(np.int64)
    n = tile_values.size
    clip = max(1, int(clip_limit * n / levels))
    excess = int(np.maximum(hist - clip, 0).sum())
    hist = np.minimum(hist, clip)
    hist += excess // levels
    remainder = excess % levels
    if remainder:
        hist[:remainder] += 1
    cdf = np.cumsum(hist)
    return _round_half_up((levels - 1) * cdf / float(cdf[-1]))


def equalize_clahe(image: RasterImage, grid: tuple[int, int] = (8, 8),
                   clip_limit: float = 2.0) -> RasterImage:
    """Contrast-limited adaptive equalization (experimental variant).

    The image is divided into a grid of tiles; each tile's histogram is
    clipped at ``clip_limit`` times the uniform bin count, the excess is
    redistributed evenly, and per-pixel output bilinearly interpolates the
    mappings of the surrounding tiles.
    """
    if clip_limit <= 0:
        raise ContractViolation("clip_limit must be positive")
    if image.data.ndim == 3:
        luma = _luminance(image.data)
        eq = equalize_clahe(RasterImage(data=luma, depth=image.depth), grid, clip_limit)
        return RasterImage(data=_rescale_rgb(image.data, luma, eq.data, image.depth),
                           depth=image.depth)

    data = image.data
    levels = image.depth
    rows, cols = grid
    height, width = data.shape
    rows = min(rows, height)
    cols = min(cols, width)

    maps = np.empty((rows, cols, levels), dtype=np.int64)
    row_edges = [height * r // rows for r in range(rows + 1)]
    col_edges = [width * c // cols for c in range(cols + 1)]
    for r in range(rows):
        for c in range(cols):
            tile = data[row_edges[r]:row_edges[r + 1], col_edges[c]:col_edges[c + 1]]
            maps[r, c] = _clipped_mapping(tile, levels, clip_limit)

    # Continuous grid coordinates of each pixel relative to tile centers.
    gy = np.clip((np.arange(height) + 0.5) * rows / height - 0.5, 0, rows - 1)
    gx = np.clip((np.arange(width) + 0.5) * cols / width - 0.5, 0, cols - 1)
    r0 = np.floor(gy).astype(int)
    c0 = np.floor(gx).astype(int)
    r1 = np.minimum(r0 + 1, rows - 1)
    c1 = np.minimum(c0 + 1, cols - 1)
    wy = (gy - r0)[:, np.newaxis]
    wx = (gx - c0)[np.newaxis, :]

    r0g, c0g = np.meshgrid(r0, c0, indexing="ij")
    r1g, c1g = np.meshgrid(r1, c1, indexing="ij")
    v = data.astype(np.int64)
    top = (1 - wx) * maps[r0g, c0g, v] + wx * maps[r0g, c1g, v]
    bottom = (1 - wx) * maps[r1g, c0g, v] + wx * maps[r1g, c1g, v]
    blended = (1 - wy) * top + wy * bottom
    out = np.clip(_round_half_up(blended), 0, levels - 1).astype(np.uint8)
    return RasterImage(data=out, depth=image.depth)


def read_image(path: str | Path) -> RasterImage:
    with Image.open(path) as img:
        if img.mode in ("L", "I;16", "I"):
            arr = np.asarray(img.convert("L"), dtype=np.uint8)
        else:
            arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return RasterImage(data=arr)


def write_image(image: RasterImage, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    mode = "L" if image.data.ndim == 2 else "RGB"
    Image.fromarray(image.data, mode=mode).save(path, format="PNG")
