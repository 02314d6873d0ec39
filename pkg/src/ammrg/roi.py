"""Patch-grid RoI selection over activation maps and zero-masking of images.

Raster interchange files hold one image or map: a 20-byte header
(``b"AMMRGIMG"``, u32 height, u32 width, u32 channels, little-endian)
followed by ``H*W*C`` little-endian f32 values in (row, col, channel) order.
"""
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import kernels
from .errors import DimensionError, FormatError

RASTER_MAGIC = b"AMMRGIMG"
_RASTER_HEADER = struct.Struct("<8sIII")


@dataclass(frozen=True)
class RoiSelection:
    grid: np.ndarray  # bool, (H/ps, W/ps)
    means: np.ndarray
    tau: float
    top_k: Optional[int] = None
    patch_size: int = 16

    @property
    def indices(self):
        """Selected patch indices in row-major order."""
        return np.flatnonzero(self.grid.ravel())


def _check_divisible(shape, patch_size):
    h, w = shape[:2]
    if patch_size < 1 or h % patch_size or w % patch_size:
        raise DimensionError(f"spatial shape {h}x{w} is not divisible by patch size {patch_size}")


def normalize_map(values):
    """Min-max scale to [0, 1]; a constant map becomes all zeros."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def patch_means(activation, patch_size=16):
    a = np.asarray(activation, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"activation map must be 2-D, got shape {a.shape}")
    _check_divisible(a.shape, patch_size)
    return kernels.patch_means(np.ascontiguousarray(a), patch_size)


def select_roi(means, tau=0.5, top_k=None, patch_size=16):
    """Patches whose mean exceeds ``tau`` (strictly), optionally restricted to
    the ``top_k`` largest means; equal means rank by row-major index."""
    means = np.asarray(means, dtype=np.float64)
    if not 0.0 <= tau < 1.0:
        raise ValueError(f"tau must lie in [0, 1), got {tau}")
    grid = means > tau
    if top_k is not None:
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        flat = means.ravel()
        order = np.lexsort((np.arange(flat.size), -flat))
        best = np.zeros(flat.size, dtype=bool)
        best[order[:top_k]] = True
        grid = grid & best.reshape(means.shape)
    return RoiSelection(grid=grid, means=means, tau=float(tau), top_k=top_k, patch_size=patch_size)


def apply_mask(image, selection):
    img = np.asarray(image)
    if img.ndim == 2:
        img = img[:, :, None]
    ps = selection.patch_size
    gh, gw = selection.grid.shape
    if img.shape[0] != gh * ps or img.shape[1] != gw * ps:
        raise DimensionError(f"image {img.shape[:2]} does not match a {gh}x{gw} grid of {ps}px patches")
    keep = np.repeat(np.repeat(selection.grid, ps, axis=0), ps, axis=1)
    out = np.zeros_like(img)
    out[keep] = img[keep]
    return out.reshape(np.asarray(image).shape)


# --------------------------------------------------------------------- raster


def write_raster(path, array):
    a = np.asarray(array)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise DimensionError(f"raster must be HxW or HxWxC, got shape {a.shape}")
    h, w, c = a.shape
    Path(path).write_bytes(_RASTER_HEADER.pack(RASTER_MAGIC, h, w, c) + a.astype("<f4").tobytes())


def read_raster(path):
    """Returns float64 ``(H, W, C)``; use ``[..., 0]`` for single-channel maps."""
    data = Path(path).read_bytes()
    if data[:8] != RASTER_MAGIC:
        raise FormatError("bad magic, not a raster file", 0)
    if len(data) < _RASTER_HEADER.size:
        raise FormatError("truncated raster header", len(data))
    _, h, w, c = _RASTER_HEADER.unpack_from(data)
    expected = _RASTER_HEADER.size + 4 * h * w * c
    if len(data) != expected:
        raise FormatError(f"raster payload has {len(data) - _RASTER_HEADER.size} bytes, expected {4 * h * w * c}",
                          min(len(data), expected))
    return np.frombuffer(data, dtype="<f4", offset=_RASTER_HEADER.size).reshape(h, w, c).astype(np.float64)
