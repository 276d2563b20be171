"""Image arrays, quality metrics, noise synthesis, and file I/O.

Conventions used across the package:

* An image is a NumPy array of shape ``(height, width, channels)`` with 1 or
  3 channels, row-major with interleaved channels.
* Images at rest (files, synthesized ground truth, observations) are
  float32.  Numeric operations preserve the dtype of their input, so
  analysis code can push float64 arrays through the same code paths.
* Reconstructions nominally live in ``[0, 1]``.  Solver iterates may leave
  that range; values are clamped only when quantizing to 8-bit files.
* PSNR pools the MSE over all pixels and channels (peak value 1.0).
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image as _PILImage

#: Sentinel PSNR (dB) reported for a zero-MSE comparison, so perfect
#: reconstructions stay plottable instead of going to infinity.
PSNR_CAP_DB = 99.0

#: Magic bytes of the raw float image format.
RAW_MAGIC = b"VIMG"

_RAW_HEADER = struct.Struct("<4sIII")  # magic, height, width, channels

# Largest element count accepted when reading raw files; guards against
# absurd allocations from corrupt headers.
_MAX_RAW_ELEMS = 1 << 28


def as_image(data, dtype=None) -> np.ndarray:
    """Normalize ``data`` to a ``(h, w, c)`` array with 1 or 3 channels.

    2-D input is treated as single-channel.  The dtype is preserved unless
    ``dtype`` is given explicitly.
    """
    arr = np.asarray(data)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"image must be 2-D or 3-D, got shape {arr.shape}")
    h, w, c = arr.shape
    if h < 1 or w < 1:
        raise ValueError(f"image dims must be >= 1, got {h}x{w}")
    if c not in (1, 3):
        raise ValueError(f"image must have 1 or 3 channels, got {c}")
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    return arr


def clip01(x) -> np.ndarray:
    """Clamp values into [0, 1], preserving shape and dtype."""
    arr = np.asarray(x)
    return np.clip(arr, 0.0, 1.0).astype(arr.dtype, copy=False)


def psnr(reference, test) -> float:
    """PSNR in dB between two images of identical dimensions.

    MSE is pooled over all pixels and channels, with peak intensity 1.0.
    Inputs outside [0, 1] are accepted (iterates of a diverging solver can
    be arbitrarily bad, giving negative PSNR).  A zero MSE returns the
    sentinel :data:`PSNR_CAP_DB` rather than infinity.
    """
    ref = as_image(reference)
    tst = as_image(test)
    if ref.shape != tst.shape:
        raise ValueError(f"dimension mismatch: {ref.shape} vs {tst.shape}")
    diff = ref.astype(np.float64) - tst.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(1.0 / mse))


def add_gaussian_noise(x, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add iid Gaussian noise of standard deviation ``sigma``.

    The output is not clamped.  ``sigma=0`` returns the input values
    unchanged.  ``rng`` is a ``numpy.random.Generator``; a fixed seed gives
    an identical noise field on every platform.
    """
    img = as_image(x)
    if sigma < 0:
        raise ValueError(f"noise sigma must be nonnegative, got {sigma}")
    noise = rng.normal(0.0, sigma, size=img.shape)
    return (img + noise.astype(img.dtype, copy=False)).astype(img.dtype, copy=False)


# ---------------------------------------------------------------------------
# File I/O.  Format chosen by extension: .png (8-bit, quantized) or .vimg
# (raw float32, lossless round trip).


def save_image(path, x) -> None:
    """Write an image to ``path``; format selected by file extension."""
    img = as_image(x)
    p = str(path)
    if p.lower().endswith(".png"):
        _save_png(p, img)
    elif p.lower().endswith(".vimg"):
        _save_raw(p, img)
    else:
        raise ValueError(f"unsupported image format: {p!r} (expected .png or .vimg)")


def load_image(path) -> np.ndarray:
    """Read an image from ``path`` as float32; format selected by extension."""
    p = str(path)
    if p.lower().endswith(".png"):
        return _load_png(p)
    if p.lower().endswith(".vimg"):
        return _load_raw(p)
    raise ValueError(f"unsupported image format: {p!r} (expected .png or .vimg)")


def _save_png(path: str, img: np.ndarray) -> None:
    # Quantization rule: clamp to [0, 1], then round(v * 255).  Non-finite
    # values (a diverged run's final iterate) map to 0 instead of tripping
    # an undefined float->uint8 cast.
    safe = np.nan_to_num(img.astype(np.float64), nan=0.0, posinf=1.0, neginf=0.0)
    q = np.rint(np.clip(safe, 0.0, 1.0) * 255.0).astype(np.uint8)
    if q.shape[2] == 1:
        pil = _PILImage.fromarray(q[:, :, 0], mode="L")
    else:
        pil = _PILImage.fromarray(q, mode="RGB")
    pil.save(path, format="PNG")


def _load_png(path: str) -> np.ndarray:
    with _PILImage.open(path) as pil:
        if pil.mode in ("L", "1", "I", "I;16"):
            pil = pil.convert("L")
        elif pil.mode != "RGB":
            pil = pil.convert("RGB")
        arr = np.asarray(pil, dtype=np.float32) / np.float32(255.0)
    return as_image(arr)


def _save_raw(path: str, img: np.ndarray) -> None:
    h, w, c = img.shape
    data = np.ascontiguousarray(img, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_RAW_HEADER.pack(RAW_MAGIC, h, w, c))
        fh.write(data.tobytes())


def _load_raw(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_RAW_HEADER.size)
        if len(header) != _RAW_HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, h, w, c = _RAW_HEADER.unpack(header)
        if magic != RAW_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if h < 1 or w < 1 or c not in (1, 3):
            raise ValueError(f"{path}: invalid dims {h}x{w}x{c}")
        n = h * w * c
        if n > _MAX_RAW_ELEMS:
            raise ValueError(f"{path}: dimension overflow ({h}x{w}x{c})")
        payload = fh.read(4 * n)
        if len(payload) != 4 * n:
            raise ValueError(f"{path}: truncated payload ({len(payload)} of {4 * n} bytes)")
    arr = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
    return arr.astype(np.float32, copy=True)


# ---------------------------------------------------------------------------
# Bicubic resampling (Catmull-Rom cubic, a = -0.5, reflective boundary).
# Used to initialize super-resolution runs from the low-resolution frame.


def _cubic_weights(t: np.ndarray) -> np.ndarray:
    """Catmull-Rom weights for the four taps around fractional offset t."""
    a = -0.5
    s = np.stack([1.0 + t, t, 1.0 - t, 2.0 - t], axis=-1)
    s = np.abs(s)
    w = np.where(
        s <= 1.0,
        (a + 2.0) * s**3 - (a + 3.0) * s**2 + 1.0,
        a * s**3 - 5.0 * a * s**2 + 8.0 * a * s - 4.0 * a,
    )
    return np.where(s < 2.0, w, 0.0)


def _reflect_index(idx: np.ndarray, n: int) -> np.ndarray:
    # Mirror indices into [0, n) without repeating the edge sample twice
    # in a row (…cba|abc|cba…).
    idx = np.asarray(idx)
    period = 2 * n
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - idx - 1, idx)


def _upsample_axis(x: np.ndarray, factor: int, axis: int) -> np.ndarray:
    n = x.shape[axis]
    out_n = n * factor
    # Align pixel centers: output i samples source at (i + 0.5)/f - 0.5.
    src = (np.arange(out_n) + 0.5) / factor - 0.5
    base = np.floor(src).astype(int)
    t = src - base
    weights = _cubic_weights(t)  # (out_n, 4)
    taps = np.stack([base - 1, base, base + 1, base + 2], axis=-1)
    taps = _reflect_index(taps, n)
    moved = np.moveaxis(x, axis, 0)
    out = np.einsum("ok,ok...->o...", weights, moved[taps])
    return np.moveaxis(out, 0, axis)


def bicubic_upsample(x, factor: int) -> np.ndarray:
    """Upsample both spatial axes by an integer factor with bicubic
    (Catmull-Rom) interpolation and reflective boundary handling."""
    img = as_image(x)
    if int(factor) != factor or factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return img.copy()
    out = _upsample_axis(img.astype(np.float64), factor, axis=0)
    out = _upsample_axis(out, factor, axis=1)
    return out.astype(img.dtype, copy=False)
