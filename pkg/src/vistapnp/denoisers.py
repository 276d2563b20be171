"""Denoisers: the pluggable image-to-image maps of the reconstruction loops.

Includes synthetic denoisers with known operator norms (for controlled
stability experiments), non-local means in a naive reference form and a
vectorized fast path, the doubly-stochastic symmetrized NLM built from a
frozen guide image, and a dihedral-symmetrization wrapper.

All maps preserve the dtype of their input and compute in float64
internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.ndimage

from .analysis import sample_image_pairs
from .forward import Kernel, circular_convolve, gaussian_kernel
from .image import as_image


@dataclass(frozen=True)
class Denoiser:
    """A named image-to-image map.

    ``name`` and ``params`` identify the denoiser in traces and reports;
    calling the instance applies it.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    name: str
    params: dict = field(default_factory=dict)

    def __call__(self, x) -> np.ndarray:
        return self.fn(x)

    @property
    def descriptor(self) -> str:
        shown = {k: v for k, v in self.params.items() if not k.startswith("_")}
        inner = ", ".join(f"{k}={v}" for k, v in sorted(shown.items()))
        return f"{self.name}({inner})"


def _smoother_kernel(sigma: float) -> Kernel:
    # Kernel footprint covers +-3 sigma; the bridge reference server uses
    # the same sizing rule so both sides filter identically.
    size = max(3, 2 * math.ceil(3.0 * sigma) + 1)
    return Kernel(gaussian_kernel(size, sigma).taps)


def gaussian_smoother(sigma: float) -> Denoiser:
    """Circular Gaussian filtering; nonexpansive (DC gain 1, rest below)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    kernel = _smoother_kernel(sigma)

    def fn(x):
        return circular_convolve(x, kernel)

    return Denoiser(fn, "gaussian", {"sigma": sigma})


def scaled_identity(beta: float) -> Denoiser:
    """x -> beta * x with beta in [0, 1]; Lipschitz constant exactly beta."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")

    def fn(x):
        img = as_image(x)
        return (img * float(beta)).astype(img.dtype, copy=False)

    return Denoiser(fn, "scaled_identity", {"beta": beta})


def unsharp_expansive(lam: float, base_sigma: float) -> Denoiser:
    """Unsharp mask x -> G(x) + lam * (x - G(x)) with lam > 1.

    Deliberately expansive: its operator norm is the max over frequency
    bins of ``|g + lam * (1 - g)|`` where g is the Gaussian's response, so
    high frequencies are amplified by up to ~lam.  Used to provoke
    plug-and-play divergence on demand.
    """
    if lam <= 1.0:
        raise ValueError(f"lam must be > 1 for an expansive map, got {lam}")
    kernel = _smoother_kernel(base_sigma)

    def fn(x):
        img = as_image(x)
        smooth = circular_convolve(img.astype(np.float64), kernel)
        out = smooth + lam * (img - smooth)
        return out.astype(img.dtype, copy=False)

    return Denoiser(fn, "unsharp_expansive", {"lam": lam, "base_sigma": base_sigma})


# ---------------------------------------------------------------------------
# Non-local means.
#
# Weight between pixels i and j: exp(-||patch_i - patch_j||^2 / norm) with
# norm = h^2 * patch_pixels * channels; patches and search windows use
# periodic boundary, matching the package-wide convolution convention.
# "window_radius"/"patch_radius" of 1 mean 3x3 footprints.


def _check_nlm_params(window_radius, patch_radius, h):
    if window_radius < 0 or patch_radius < 0:
        raise ValueError("radii must be >= 0")
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")


def _window_offsets(window_radius: int):
    return [
        (dy, dx)
        for dy in range(-window_radius, window_radius + 1)
        for dx in range(-window_radius, window_radius + 1)
    ]


def _patch_distance_maps(img64: np.ndarray, offsets, patch_radius: int, h: float):
    """Per-offset maps of exp(-patch distance / norm) via shift-and-accumulate.

    For each window offset t, the squared-difference image against the
    t-shifted copy is box-filtered over the patch footprint, giving the
    patch distance between every pixel i and its neighbor i+t in one
    vectorized pass.
    """
    hh, ww, cc = img64.shape
    size = 2 * patch_radius + 1
    norm = h * h * (size * size) * cc
    maps = {}
    for dy, dx in offsets:
        shifted = np.roll(img64, (-dy, -dx), axis=(0, 1))
        sq = np.sum((img64 - shifted) ** 2, axis=2)
        dist = scipy.ndimage.uniform_filter(sq, size=size, mode="wrap") * (size * size)
        maps[(dy, dx)] = np.exp(-dist / norm)
    return maps


def nlm_denoise(x, window_radius: int = 1, patch_radius: int = 1, h: float = 60.0 / 255.0) -> np.ndarray:
    """Non-local means (vectorized fast path).

    Weights are computed from the input itself and row-normalized; the
    center pixel participates with weight 1.
    """
    _check_nlm_params(window_radius, patch_radius, h)
    img = as_image(x)
    img64 = img.astype(np.float64)
    weights = _patch_distance_maps(img64, _window_offsets(window_radius), patch_radius, h)
    num = np.zeros_like(img64)
    den = np.zeros(img64.shape[:2], dtype=np.float64)
    for (dy, dx), w in weights.items():
        num += w[:, :, None] * np.roll(img64, (-dy, -dx), axis=(0, 1))
        den += w
    return (num / den[:, :, None]).astype(img.dtype, copy=False)


def nlm_denoiser(
    window_radius: int = 1, patch_radius: int = 1, h: float = 60.0 / 255.0
) -> Denoiser:
    """Plain NLM as a pluggable denoiser (weights recomputed on each call)."""
    _check_nlm_params(window_radius, patch_radius, h)

    def fn(x):
        return nlm_denoise(x, window_radius, patch_radius, h)

    return Denoiser(
        fn, "nlm", {"window_radius": window_radius, "patch_radius": patch_radius, "h": h}
    )


def nlm_denoise_naive(x, window_radius: int = 1, patch_radius: int = 1, h: float = 60.0 / 255.0) -> np.ndarray:
    """Reference non-local means: explicit per-pixel loops.

    Slow on purpose; exists as the oracle the fast path must reproduce.
    """
    _check_nlm_params(window_radius, patch_radius, h)
    img = as_image(x)
    img64 = img.astype(np.float64)
    hh, ww, cc = img64.shape
    size = 2 * patch_radius + 1
    norm = h * h * (size * size) * cc
    pr = np.arange(-patch_radius, patch_radius + 1)

    def patch(i, j):
        rows = (i + pr) % hh
        cols = (j + pr) % ww
        return img64[np.ix_(rows, cols)]

    out = np.empty_like(img64)
    for i in range(hh):
        for j in range(ww):
            p0 = patch(i, j)
            num = np.zeros(cc)
            den = 0.0
            for dy in range(-window_radius, window_radius + 1):
                for dx in range(-window_radius, window_radius + 1):
                    ii = (i + dy) % hh
                    jj = (j + dx) % ww
                    d2 = float(np.sum((p0 - patch(ii, jj)) ** 2))
                    w = math.exp(-d2 / norm)
                    num += w * img64[ii, jj]
                    den += w
            out[i, j] = num / den
    return out.astype(img.dtype, copy=False)


@dataclass(frozen=True)
class DsgNlmWeights:
    """Frozen symmetric doubly-stochastic NLM weights from a guide image.

    ``maps[k]`` holds, for every pixel i, the weight between i and the
    pixel at i + offsets[k] (periodic).  Symmetry is exact by construction:
    the map for -t is the rolled map for t.
    """

    offsets: tuple
    maps: np.ndarray  # (num_offsets, h, w) float64
    guide_shape: tuple
    params: dict

    def apply(self, x) -> np.ndarray:
        img = as_image(x)
        if img.shape[:2] != self.guide_shape[:2]:
            raise ValueError(
                f"weights built for {self.guide_shape[:2]}, got image {img.shape[:2]}"
            )
        x64 = img.astype(np.float64)
        out = np.zeros_like(x64)
        for (dy, dx), w in zip(self.offsets, self.maps):
            out += w[:, :, None] * np.roll(x64, (-dy, -dx), axis=(0, 1))
        return out.astype(img.dtype, copy=False)

    def row_sums(self) -> np.ndarray:
        return self.maps.sum(axis=0)


def build_dsg_weights(
    guide, window_radius: int = 1, patch_radius: int = 1, h: float = 60.0 / 255.0
) -> DsgNlmWeights:
    """Symmetrize NLM weights from a fixed guide into a doubly stochastic map.

    Raw symmetric weights w_ij from the guide are normalized by
    ``w_ij / sqrt(d_i d_j)`` (d = raw row sums), then the diagonal is reset
    so each row sums to exactly 1.  The result is symmetric, nonnegative,
    and doubly stochastic, hence nonexpansive with spectral norm 1.  A
    negative diagonal after the reset is an error — it means ``h`` is too
    small for the chosen window.
    """
    _check_nlm_params(window_radius, patch_radius, h)
    img = as_image(guide)
    img64 = img.astype(np.float64)
    hh, ww = img64.shape[:2]

    # Offsets come in +-t pairs; compute one half and mirror so that
    # symmetry is exact down to the last bit, not just up to rounding.
    half = [(dy, dx) for dy, dx in _window_offsets(window_radius) if (dy, dx) > (0, 0)]
    raw = {(0, 0): np.ones((hh, ww), dtype=np.float64)}
    raw.update(_patch_distance_maps(img64, half, patch_radius, h))
    for dy, dx in half:
        raw[(-dy, -dx)] = np.roll(raw[(dy, dx)], (dy, dx), axis=(0, 1))

    offsets = sorted(raw.keys())
    d = np.zeros((hh, ww), dtype=np.float64)
    for t in offsets:
        d += raw[t]

    sym = {(0, 0): raw[(0, 0)] / d}
    for dy, dx in half:
        d_shift = np.roll(d, (-dy, -dx), axis=(0, 1))
        sym[(dy, dx)] = raw[(dy, dx)] / np.sqrt(d * d_shift)
    for dy, dx in half:
        sym[(-dy, -dx)] = np.roll(sym[(dy, dx)], (dy, dx), axis=(0, 1))

    sums = np.zeros((hh, ww), dtype=np.float64)
    for t in offsets:
        sums += sym[t]
    diag = sym[(0, 0)] + (1.0 - sums)
    if float(diag.min()) < 0.0:
        raise ValueError(
            f"diagonal reset went negative (min {diag.min():.3e}); "
            "h is too small for this window"
        )
    sym[(0, 0)] = diag

    maps = np.stack([sym[t] for t in offsets])
    return DsgNlmWeights(
        offsets=tuple(offsets),
        maps=maps,
        guide_shape=img.shape,
        params={"window_radius": window_radius, "patch_radius": patch_radius, "h": h},
    )


def dsg_nlm_denoiser(weights: DsgNlmWeights) -> Denoiser:
    """Linear denoiser applying frozen doubly-stochastic NLM weights."""
    return Denoiser(
        weights.apply,
        "dsg_nlm",
        {**weights.params, "guide_shape": weights.guide_shape},
    )


# ---------------------------------------------------------------------------
# Dihedral symmetrization.

# The 8 elements of the square's symmetry group as (flip, quarter-turns).
_D4 = [(j, k) for j in (0, 1) for k in range(4)]


def _d4_apply(x, j, k):
    y = np.flip(x, axis=0) if j else x
    return np.rot90(y, k, axes=(0, 1))


def _d4_invert(x, j, k):
    y = np.rot90(x, -k, axes=(0, 1))
    return np.flip(y, axis=0) if j else y


def equivariant_wrap(inner: Denoiser, mode: str = "averaged", rng: np.random.Generator | None = None) -> Denoiser:
    """Symmetrize a denoiser over the dihedral group of the square.

    ``averaged`` applies all 8 group elements and averages g^-1 D(g x);
    ``sampled`` draws one element uniformly per call from ``rng`` (so the
    wrapped map is random but reproducible under a fixed seed).  Rotations
    require square inputs.
    """
    if mode not in ("averaged", "sampled"):
        raise ValueError(f"mode must be 'averaged' or 'sampled', got {mode!r}")
    if mode == "sampled" and rng is None:
        raise ValueError("sampled mode requires rng")

    def fn(x):
        img = as_image(x)
        if img.shape[0] != img.shape[1]:
            raise ValueError(
                f"equivariant wrapping needs square images for rotations, got {img.shape[:2]}"
            )
        if mode == "sampled":
            j, k = _D4[int(rng.integers(len(_D4)))]
            return np.ascontiguousarray(_d4_invert(inner(_d4_apply(img, j, k)), j, k))
        acc = np.zeros(img.shape, dtype=np.float64)
        for j, k in _D4:
            acc += _d4_invert(inner(_d4_apply(img, j, k)), j, k)
        return (acc / len(_D4)).astype(img.dtype, copy=False)

    return Denoiser(fn, f"equivariant_{mode}", {"inner": inner.descriptor})


def estimate_lipschitz(
    d: Callable[[np.ndarray], np.ndarray],
    dims,
    trials: int = 50,
    rng: np.random.Generator | None = None,
) -> float:
    """Sampled lower bound on a map's Lipschitz constant.

    Max ratio ||D(x1) - D(x2)|| / ||x1 - x2|| over random pairs plus
    near-duplicate perturbation pairs; degenerate pairs are redrawn.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for x1, x2 in sample_image_pairs(dims, trials, rng):
        dist = float(np.linalg.norm(x1 - x2))
        ratio = float(np.linalg.norm(np.asarray(d(x1)) - np.asarray(d(x2)))) / dist
        worst = max(worst, ratio)
    return worst
