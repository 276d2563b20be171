"""Viscosity-stabilized iteration.

Instead of iterating a possibly-expansive fixed-point operator T directly,
each step blends it with a known contraction S ("viscosity operator"):

    x_{k+1} = (1 - theta_k) T(x_k) + theta_k S(x_k)

The damping theta_k is chosen adaptively from the measured expansion of T
and contraction of S toward S's fixed point p:

    eta_k  = ||T(x_k) - p|| / ||x_k - p||
    beta_k = ||S(x_k) - p|| / ||x_k - p||
    theta_k = 0                           if eta_k <= 1
    theta_k = min((eta_k - 1) / (eta_k - beta_k), cap)   otherwise

With that choice the update satisfies

    ||x_{k+1} - p|| <= ((1 - theta_k) eta_k + theta_k beta_k) ||x_k - p||

by the triangle inequality, so whenever theta_k reaches its uncapped value
the distance to p cannot grow: expansion is damped exactly as hard as the
measurements demand, and not more.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .bridge import BridgeError
from .denoisers import Denoiser, build_dsg_weights
from .forward import Problem, grad_f
from .image import as_image
from .operators import DEFAULT_GUARD, _bad_iterate, _safe_norm, _state_row, _track_peak
from .trace import IterationTrace, TraceSummary, summarize  # noqa: F401  (re-export)

# Guard for a numerically degenerate damping formula: when eta - beta is
# this small the ratio is meaningless, so maximum damping is applied.
DEGENERATE_GAP = 1e-12


@dataclass(frozen=True)
class ViscosityConfig:
    theta_cap: float = 0.2
    schedule: str = "adaptive"  # "adaptive" | "constant" | "reciprocal"
    theta: float | None = None  # constant schedule value
    neighborhood_eps: float = 1e-3
    fp_tol: float = 1e-3
    fp_max_iter: int = 50

    def __post_init__(self):
        if not 0.0 < self.theta_cap < 1.0:
            raise ValueError(f"theta_cap must be in (0, 1), got {self.theta_cap}")
        if self.schedule not in ("adaptive", "constant", "reciprocal"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.schedule == "constant":
            if self.theta is None or not 0.0 <= self.theta <= 1.0:
                raise ValueError(f"constant schedule needs theta in [0, 1], got {self.theta}")
        if self.neighborhood_eps <= 0:
            raise ValueError(f"neighborhood_eps must be positive, got {self.neighborhood_eps}")
        if self.fp_tol <= 0 or self.fp_max_iter < 1:
            raise ValueError("fixed-point settings must be positive")


class FixedPointResult(NamedTuple):
    point: np.ndarray
    residual: float
    converged: bool
    iterations: int


def fixed_point(
    s: Callable[[np.ndarray], np.ndarray],
    x0,
    tol: float = 1e-3,
    max_iter: int = 50,
) -> FixedPointResult:
    """Fixed point of a contraction by plain iteration from ``x0``.

    Stops when ``||x_{t+1} - x_t|| <= tol * max(1, ||x_t||)``.  Never
    raises on non-convergence — a rough fixed-point estimate is all the
    damping rule needs — it just reports ``converged=False`` with the
    achieved residual.
    """
    x = as_image(x0).copy()
    residual = math.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        x_next = as_image(s(x))
        residual = float(np.linalg.norm((x_next - x).astype(np.float64, copy=False)))
        scale = max(1.0, float(np.linalg.norm(x.astype(np.float64, copy=False))))
        x = x_next
        if residual <= tol * scale:
            return FixedPointResult(x, residual, True, iterations)
    return FixedPointResult(x, residual, False, iterations)


class ViscosityIndex(NamedTuple):
    theta: float
    eta: float  # nan when x_k == p exactly
    beta: float
    near_p: bool


def viscosity_index(x_k, tx, sx, p, cfg: ViscosityConfig) -> ViscosityIndex:
    """Damping weight for one step, from the measured eta/beta ratios.

    Inside the ``neighborhood_eps`` ball around p the maximum damping
    ``theta_cap`` is applied regardless of the ratios (the measured eta is
    unreliable there).  A degenerate gap eta - beta <= 1e-12 also falls
    back to maximum damping.
    """
    x64 = np.asarray(x_k, dtype=np.float64)
    p64 = np.asarray(p, dtype=np.float64)
    dist = float(np.linalg.norm(x64 - p64))
    if dist > 0.0:
        eta = float(np.linalg.norm(np.asarray(tx, dtype=np.float64) - p64)) / dist
        beta = float(np.linalg.norm(np.asarray(sx, dtype=np.float64) - p64)) / dist
    else:
        eta = beta = math.nan
    if dist <= cfg.neighborhood_eps * max(1.0, float(np.linalg.norm(p64))):
        return ViscosityIndex(cfg.theta_cap, eta, beta, True)
    if eta <= 1.0:
        return ViscosityIndex(0.0, eta, beta, False)
    if eta - beta <= DEGENERATE_GAP:
        return ViscosityIndex(cfg.theta_cap, eta, beta, False)
    return ViscosityIndex(min((eta - 1.0) / (eta - beta), cfg.theta_cap), eta, beta, False)


def nlm_viscosity_operator(
    problem: Problem,
    guide,
    rho: float = 1.9,
    window_radius: int = 1,
    patch_radius: int = 1,
    h: float = 60.0 / 255.0,
) -> Denoiser:
    """The contractive map S = W . (I - rho * grad_f).

    W is the frozen doubly-stochastic NLM smoother built from ``guide``
    (conventionally the run's initialization), and the inner gradient step
    uses relaxation ``rho``; for deblurring and downsampling models with
    rho in (0, 2) the composition is a contraction.
    """
    if not 0.0 < rho < 2.0:
        raise ValueError(f"rho must be in (0, 2), got {rho}")
    weights = build_dsg_weights(guide, window_radius, patch_radius, h)

    def fn(x):
        img = as_image(x)
        step = img - rho * grad_f(problem, img)
        return weights.apply(step.astype(img.dtype, copy=False))

    return Denoiser(
        fn,
        "nlm_viscosity",
        {"rho": rho, "window_radius": window_radius, "patch_radius": patch_radius, "h": h},
    )


def vista_iterate(
    t: Callable[[np.ndarray], np.ndarray],
    s: Callable[[np.ndarray], np.ndarray],
    x0,
    iters: int,
    cfg: ViscosityConfig | None = None,
    ground_truth=None,
    observer: Callable[[int, np.ndarray], None] | None = None,
    guard: float = DEFAULT_GUARD,
) -> IterationTrace:
    """Viscosity-stabilized iteration of T damped toward S's fixed point.

    The fixed point p of S is estimated once up front (non-convergence is
    only flagged, not fatal).  Per iteration the trace records theta, eta,
    beta, the update residual, and whether the near-p branch fired.  The
    ``reciprocal`` schedule uses theta_k = min(1/k, cap) counting updates
    from k = 1.  Divergence and bridge failures behave exactly as in
    :func:`vanilla_iterate`.
    """
    if iters < 0:
        raise ValueError(f"iters must be >= 0, got {iters}")
    if cfg is None:
        cfg = ViscosityConfig()
    x = as_image(x0).copy()
    t0 = time.perf_counter()
    fp = fixed_point(s, x, tol=cfg.fp_tol, max_iter=cfg.fp_max_iter)
    p = fp.point

    trace = IterationTrace(
        x_initial=x.copy(),
        fixed_point=p.copy(),
        fixed_point_residual=fp.residual,
        fixed_point_converged=fp.converged,
    )
    trace.rows.append(_state_row(0, x, ground_truth))
    if observer is not None:
        observer(0, x)
    _track_peak(trace, 0, x)
    if _bad_iterate(x, guard):
        trace.rows[-1].diverged = True
        trace.diverged = True
        iters = 0

    for k in range(iters):
        try:
            tx = as_image(t(x))
            sx = as_image(s(x))
        except BridgeError:
            trace.bridge_failed = True
            break
        if cfg.schedule == "adaptive":
            idx = viscosity_index(x, tx, sx, p, cfg)
        elif cfg.schedule == "constant":
            idx = ViscosityIndex(float(cfg.theta), math.nan, math.nan, False)
        else:  # reciprocal, updates counted from 1
            idx = ViscosityIndex(min(1.0 / (k + 1), cfg.theta_cap), math.nan, math.nan, False)
        x_next = ((1.0 - idx.theta) * tx + idx.theta * sx).astype(x.dtype, copy=False)

        step = trace.rows[-1]
        step.theta = idx.theta
        step.eta = None if math.isnan(idx.eta) else idx.eta
        step.beta = None if math.isnan(idx.beta) else idx.beta
        step.near_p = idx.near_p
        step.residual = _safe_norm(x_next - x)

        trace.rows.append(_state_row(k + 1, x_next, ground_truth))
        if observer is not None:
            observer(k + 1, x_next)
        x = x_next
        _track_peak(trace, k + 1, x)
        if _bad_iterate(x, guard):
            trace.rows[-1].diverged = True
            trace.diverged = True
            break

    trace.x_final = x.copy()
    trace.wall_seconds = time.perf_counter() - t0
    return trace
