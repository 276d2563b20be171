"""Synthetic ground-truth images.

Procedurally generated test scenes with smooth regions, sharp edges, and
mild texture — enough structure for deblurring/super-resolution demos
without shipping any third-party photographs.  Deterministic in all
arguments.
"""

from __future__ import annotations

import numpy as np

from .image import as_image

PHANTOM_NAMES = ("shapes", "rings", "bars")


def phantom(name: str = "shapes", size: int = 128, channels: int = 1) -> np.ndarray:
    """Render a named test scene at ``size`` x ``size``, float32 in [0, 1]."""
    if size < 8:
        raise ValueError(f"size must be >= 8, got {size}")
    if channels not in (1, 3):
        raise ValueError(f"channels must be 1 or 3, got {channels}")
    yy, xx = np.meshgrid(
        np.linspace(0.0, 1.0, size), np.linspace(0.0, 1.0, size), indexing="ij"
    )
    if name == "shapes":
        img = _shapes(yy, xx)
    elif name == "rings":
        img = _rings(yy, xx)
    elif name == "bars":
        img = _bars(yy, xx)
    else:
        raise ValueError(f"unknown phantom {name!r}; choose from {PHANTOM_NAMES}")
    img = np.clip(img, 0.02, 0.98)
    if channels == 3:
        # Tint the channels so color runs exercise per-channel paths.
        r = np.clip(img * 1.05, 0.02, 0.98)
        g = img
        b = np.clip(img * 0.85 + 0.05, 0.02, 0.98)
        out = np.stack([r, g, b], axis=-1)
    else:
        out = img[:, :, None]
    return as_image(out.astype(np.float32))


def _shapes(yy, xx):
    img = 0.25 + 0.35 * (0.6 * xx + 0.4 * yy)
    disk = (yy - 0.38) ** 2 + (xx - 0.34) ** 2 < 0.17**2
    img = np.where(disk, 0.85, img)
    inner = (yy - 0.33) ** 2 + (xx - 0.30) ** 2 < 0.05**2
    img = np.where(inner, 0.30, img)
    rect = (yy > 0.55) & (yy < 0.82) & (xx > 0.52) & (xx < 0.88)
    img = np.where(rect, 0.12, img)
    img = img + 0.30 * np.exp(-(((yy - 0.25) ** 2 + (xx - 0.75) ** 2) / (2 * 0.07**2)))
    stripe = np.abs((xx - 0.1) - 0.85 * (yy - 0.6)) < 0.015
    img = np.where(stripe & (yy > 0.45), 0.70, img)
    img = img + 0.03 * np.sin(2 * np.pi * 9 * xx) * np.sin(2 * np.pi * 7 * yy)
    return img


def _rings(yy, xx):
    r = np.hypot(yy - 0.5, xx - 0.5)
    img = 0.5 + 0.42 * np.cos(2 * np.pi * (6.0 * r + 4.0 * r * r))
    img = np.where(r < 0.05, 0.9, img)
    return img


def _bars(yy, xx):
    img = 0.5 + 0.40 * np.sign(np.sin(2 * np.pi * (3.0 * xx + 6.0 * yy)))
    block = (yy > 0.1) & (yy < 0.35) & (xx > 0.55) & (xx < 0.9)
    img = np.where(block, 0.75, img)
    blob = np.exp(-(((yy - 0.7) ** 2 + (xx - 0.25) ** 2) / (2 * 0.09**2)))
    return img * (1.0 - 0.5 * blob) + 0.45 * blob
