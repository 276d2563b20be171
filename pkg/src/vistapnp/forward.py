"""Linear measurement operators, their adjoints, and data-term solvers.

Models the measurement side of reconstruction, ``y = A(x) + noise``, for
identity, circular-convolution blur, and blur-then-subsample operators.
All convolutions use periodic boundary conditions, which keeps adjoints
exact and blur operators diagonal in the Fourier basis.

Operators compute in float64 internally and return arrays in the dtype of
their input; this makes the adjoint identity <Ax, u> = <x, A*u> and the
conjugate-gradient data solves accurate well below test tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .image import as_image


@dataclass(frozen=True)
class Kernel:
    """2-D convolution kernel with finite taps.

    The tap at index ``((h-1)//2, (w-1)//2)`` is treated as the center.
    Blur constructors (:func:`gaussian_kernel`, :func:`load_kernel`)
    guarantee the taps sum to 1.
    """

    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 2 or taps.size == 0:
            raise ValueError(f"kernel taps must be a non-empty 2-D array, got shape {taps.shape}")
        if not np.all(np.isfinite(taps)):
            raise ValueError("kernel taps must be finite")
        object.__setattr__(self, "taps", taps)

    @property
    def height(self) -> int:
        return self.taps.shape[0]

    @property
    def width(self) -> int:
        return self.taps.shape[1]


def gaussian_kernel(size: int, sigma: float) -> Kernel:
    """Isotropic Gaussian blur kernel, ``size`` x ``size`` taps summing to 1."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    half = size // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    xx, yy = np.meshgrid(ax, ax)
    taps = np.exp(-(xx**2 + yy**2) / (2.0 * sigma**2))
    return Kernel(taps / taps.sum())


def motion_kernel(length: int = 15, angle: float = 45.0) -> Kernel:
    """Straight-line motion blur: a centered segment of ``length`` pixels at
    ``angle`` degrees, rasterized with bilinear splatting, taps summing to 1."""
    if int(length) != length or length < 1:
        raise ValueError(f"length must be a positive integer, got {length}")
    length = int(length)
    size = length | 1  # odd grid that covers the segment at any angle
    center = size // 2
    rad = np.deg2rad(float(angle))
    # Dense samples along the segment keep the rasterization smooth.
    t = np.linspace(-(length - 1) / 2.0, (length - 1) / 2.0, max(2, 8 * length))
    ys = center + t * np.sin(rad)
    xs = center + t * np.cos(rad)
    taps = np.zeros((size, size), dtype=np.float64)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    fy = ys - y0
    fx = xs - x0
    for dy in (0, 1):
        for dx in (0, 1):
            wy = fy if dy else 1.0 - fy
            wx = fx if dx else 1.0 - fx
            np.add.at(
                taps,
                (np.clip(y0 + dy, 0, size - 1), np.clip(x0 + dx, 0, size - 1)),
                wy * wx,
            )
    return Kernel(taps / taps.sum())


def load_kernel(path) -> Kernel:
    """Read a kernel from a text file.

    Format: first line ``H W``, then H lines of W whitespace-separated
    floats.  Taps are renormalized to sum 1 when the file's sum deviates by
    less than 1e-3; a larger deviation is an error (the file is not a blur
    kernel).
    """
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty kernel file")
    head = lines[0].split()
    if len(head) != 2:
        raise ValueError(f"{path}: line 1: expected 'H W', got {lines[0]!r}")
    try:
        h, w = int(head[0]), int(head[1])
    except ValueError:
        raise ValueError(f"{path}: line 1: non-integer dims {lines[0]!r}") from None
    if h < 1 or w < 1:
        raise ValueError(f"{path}: line 1: dims must be >= 1, got {h}x{w}")
    if len(lines) < 1 + h:
        raise ValueError(f"{path}: expected {h} tap rows, found {len(lines) - 1}")
    taps = np.empty((h, w), dtype=np.float64)
    for i in range(h):
        row = lines[1 + i].split()
        if len(row) != w:
            raise ValueError(f"{path}: line {i + 2}: expected {w} values, got {len(row)}")
        try:
            taps[i] = [float(v) for v in row]
        except ValueError:
            raise ValueError(f"{path}: line {i + 2}: non-numeric tap") from None
    if not np.all(np.isfinite(taps)):
        raise ValueError(f"{path}: kernel taps must be finite")
    s = taps.sum()
    if abs(s - 1.0) >= 1e-3:
        raise ValueError(f"{path}: kernel sum {s:.6g} is not within 1e-3 of 1")
    return Kernel(taps / s)


# ---------------------------------------------------------------------------
# FFT plumbing.


def _embed_kernel(taps: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Place kernel taps on an HxW grid with the center tap at (0, 0)."""
    h, w = shape
    kh, kw = taps.shape
    if kh > h or kw > w:
        raise ValueError(f"kernel {kh}x{kw} larger than image {h}x{w}")
    z = np.zeros((h, w), dtype=np.float64)
    z[:kh, :kw] = taps
    return np.roll(z, (-((kh - 1) // 2), -((kw - 1) // 2)), axis=(0, 1))


def _fft_filter(x: np.ndarray, khat: np.ndarray) -> np.ndarray:
    """Multiply an (h, w, c) image by a frequency response, per channel."""
    h, w, _ = x.shape
    spec = scipy.fft.rfft2(x.astype(np.float64, copy=False), axes=(0, 1))
    out = scipy.fft.irfft2(spec * khat[:, :, None], s=(h, w), axes=(0, 1))
    return out.astype(x.dtype, copy=False)


def circular_convolve(x, kernel: Kernel) -> np.ndarray:
    """Circular (periodic-boundary) convolution of an image with a kernel."""
    img = as_image(x)
    khat = scipy.fft.rfft2(_embed_kernel(kernel.taps, img.shape[:2]))
    return _fft_filter(img, khat)


# ---------------------------------------------------------------------------
# Forward models.


class ForwardModel:
    """Linear operator pair (apply, adjoint) acting per channel.

    ``in_shape``/``out_shape`` are spatial ``(h, w)`` dims, or None when the
    model accepts any dims (identity).
    """

    in_shape: tuple[int, int] | None = None
    out_shape: tuple[int, int] | None = None

    def apply(self, x) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, u) -> np.ndarray:
        raise NotImplementedError

    def _check(self, img: np.ndarray, shape, what: str) -> None:
        if shape is not None and img.shape[:2] != shape:
            raise ValueError(
                f"{type(self).__name__}.{what}: expected spatial dims {shape}, "
                f"got {img.shape[:2]}"
            )


class Identity(ForwardModel):
    """Pass-through measurement (denoising-only problems)."""

    def __init__(self, shape: tuple[int, int] | None = None):
        self.in_shape = tuple(shape) if shape is not None else None
        self.out_shape = self.in_shape

    def apply(self, x) -> np.ndarray:
        img = as_image(x)
        self._check(img, self.in_shape, "apply")
        return img.copy()

    def adjoint(self, u) -> np.ndarray:
        img = as_image(u)
        self._check(img, self.out_shape, "adjoint")
        return img.copy()


class CircularConvolution(ForwardModel):
    """Blur by a kernel with periodic boundary; adjoint is correlation."""

    def __init__(self, kernel: Kernel, shape: tuple[int, int]):
        self.kernel = kernel
        self.in_shape = tuple(shape)
        self.out_shape = self.in_shape
        self._khat = scipy.fft.rfft2(_embed_kernel(kernel.taps, self.in_shape))

    def apply(self, x) -> np.ndarray:
        img = as_image(x)
        self._check(img, self.in_shape, "apply")
        return _fft_filter(img, self._khat)

    def adjoint(self, u) -> np.ndarray:
        img = as_image(u)
        self._check(img, self.out_shape, "adjoint")
        return _fft_filter(img, np.conj(self._khat))


class DownsampledConvolution(ForwardModel):
    """Blur then keep every ``factor``-th pixel, starting at pixel (0, 0).

    The adjoint zero-fills back to the fine grid and correlates with the
    kernel.  Input dims must be divisible by the factor.
    """

    def __init__(self, kernel: Kernel, factor: int, shape: tuple[int, int]):
        if int(factor) != factor or factor < 1:
            raise ValueError(f"factor must be a positive integer, got {factor}")
        h, w = shape
        if h % factor or w % factor:
            raise ValueError(f"image dims {h}x{w} not divisible by factor {factor}")
        self.kernel = kernel
        self.factor = int(factor)
        self.in_shape = (h, w)
        self.out_shape = (h // self.factor, w // self.factor)
        self._khat = scipy.fft.rfft2(_embed_kernel(kernel.taps, self.in_shape))

    def apply(self, x) -> np.ndarray:
        img = as_image(x)
        self._check(img, self.in_shape, "apply")
        blurred = _fft_filter(img, self._khat)
        return blurred[:: self.factor, :: self.factor].copy()

    def adjoint(self, u) -> np.ndarray:
        img = as_image(u)
        self._check(img, self.out_shape, "adjoint")
        z = np.zeros(self.in_shape + (img.shape[2],), dtype=np.float64)
        z[:: self.factor, :: self.factor] = img
        out = _fft_filter(z, np.conj(self._khat))
        return out.astype(img.dtype, copy=False)


@dataclass(frozen=True)
class Problem:
    """A measurement model together with one observed image."""

    model: ForwardModel
    observation: np.ndarray

    def __post_init__(self):
        obs = as_image(self.observation)
        if self.model.out_shape is not None and obs.shape[:2] != self.model.out_shape:
            raise ValueError(
                f"observation dims {obs.shape[:2]} do not match model output "
                f"dims {self.model.out_shape}"
            )
        object.__setattr__(self, "observation", obs)


def grad_f(problem: Problem, x) -> np.ndarray:
    """Gradient of the data term f(x) = 0.5 ||A x - y||^2, i.e. A*(A x - y)."""
    r = problem.model.apply(x)
    return problem.model.adjoint(r - problem.observation)


class ProxSolveError(RuntimeError):
    """Inner conjugate-gradient solve failed to reach tolerance."""

    def __init__(self, message: str, residual: float, rel_residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.rel_residual = rel_residual
        self.iterations = iterations


def prox_f(problem: Problem, z, mu: float, tol: float = 1e-6, max_iter: int = 200) -> np.ndarray:
    """Proximal map of the data term at strength mu.

    Returns the minimizer of ``0.5 ||A x - y||^2 + (1 / (2 mu)) ||x - z||^2``
    by conjugate gradient on the normal equation
    ``(A*A + I/mu) x = A*y + z/mu``.  On return the normal-equation residual
    satisfies ``||r|| <= tol * ||rhs||``; non-convergence raises
    :class:`ProxSolveError` carrying the final residual.
    """
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    zimg = as_image(z)
    model = problem.model
    if model.in_shape is not None and zimg.shape[:2] != model.in_shape:
        raise ValueError(f"prox input dims {zimg.shape[:2]} do not match model {model.in_shape}")

    z64 = zimg.astype(np.float64)
    y64 = problem.observation.astype(np.float64)

    def normal_op(v):
        return model.adjoint(model.apply(v)) + v / mu

    rhs = model.adjoint(y64) + z64 / mu
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros_like(zimg)

    x = z64.copy()
    r = rhs - normal_op(x)
    d = r.copy()
    rs = float(np.vdot(r, r).real)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if np.sqrt(rs) <= tol * rhs_norm:
            return x.astype(zimg.dtype, copy=False)
        q = normal_op(d)
        dq = float(np.vdot(d, q).real)
        if dq <= 0.0:
            break  # lost positive-definiteness: bail to the error path
        alpha = rs / dq
        x = x + alpha * d
        r = r - alpha * q
        rs_new = float(np.vdot(r, r).real)
        d = r + (rs_new / rs) * d
        rs = rs_new
    if np.sqrt(rs) <= tol * rhs_norm:
        return x.astype(zimg.dtype, copy=False)
    raise ProxSolveError(
        f"conjugate gradient did not reach tol={tol:g} within {max_iter} iterations "
        f"(relative residual {np.sqrt(rs) / rhs_norm:.3e})",
        residual=float(np.sqrt(rs)),
        rel_residual=float(np.sqrt(rs) / rhs_norm),
        iterations=iterations,
    )
