"""Plug-and-play fixed-point operators and the vanilla iteration loop.

Each operator is a stateless map T: image -> image combining one data-term
move with one denoiser application:

* ``pgd``:  T(x) = D(x - gamma * grad_f(x))
* ``hqs``:  T(x) = D(prox_{mu f}(x))
* ``admm``: T(x) = 0.5 * (x + (2 D - I)((2 prox_{alpha f} - I)(x)))

Iterating any of them is "vanilla" plug-and-play; whether the iteration
converges depends entirely on the denoiser's expansiveness.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bridge import BridgeError
from .denoisers import Denoiser
from .forward import Problem, grad_f, prox_f
from .image import as_image, psnr
from .trace import IterationTrace, TraceRow

#: Divergence guard: iteration stops once ||x||_inf exceeds this.
DEFAULT_GUARD = 1e6


@dataclass(frozen=True)
class PnPOperator:
    kind: str  # "pgd" | "hqs" | "admm"
    problem: Problem
    denoiser: Denoiser
    param: float  # gamma (pgd), mu (hqs), or alpha (admm)
    cg_tol: float = 1e-6
    cg_max_iter: int = 200

    def __post_init__(self):
        if self.kind not in ("pgd", "hqs", "admm"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        # gamma = 0 is a legal degenerate step (pure denoising); the prox
        # strengths must be strictly positive for the normal equation.
        if self.kind == "pgd" and self.param < 0:
            raise ValueError(f"gamma must be >= 0, got {self.param}")
        if self.kind in ("hqs", "admm") and self.param <= 0:
            raise ValueError(f"{self.kind} strength must be > 0, got {self.param}")

    def __call__(self, x) -> np.ndarray:
        return evaluate(self, x)

    @property
    def descriptor(self) -> str:
        return f"{self.kind}({self.param:g}) . {self.denoiser.descriptor}"


def pgd_operator(problem: Problem, denoiser: Denoiser, gamma: float, **kw) -> PnPOperator:
    return PnPOperator("pgd", problem, denoiser, gamma, **kw)


def hqs_operator(problem: Problem, denoiser: Denoiser, mu: float, **kw) -> PnPOperator:
    return PnPOperator("hqs", problem, denoiser, mu, **kw)


def admm_operator(problem: Problem, denoiser: Denoiser, alpha: float, **kw) -> PnPOperator:
    return PnPOperator("admm", problem, denoiser, alpha, **kw)


def eval_pgd(op: PnPOperator, x) -> np.ndarray:
    img = as_image(x)
    step = img - op.param * grad_f(op.problem, img)
    return op.denoiser(step.astype(img.dtype, copy=False))


def eval_hqs(op: PnPOperator, x) -> np.ndarray:
    return op.denoiser(prox_f(op.problem, x, op.param, tol=op.cg_tol, max_iter=op.cg_max_iter))


def eval_admm(op: PnPOperator, x) -> np.ndarray:
    img = as_image(x)
    p = prox_f(op.problem, img, op.param, tol=op.cg_tol, max_iter=op.cg_max_iter)
    r = 2.0 * p - img
    out = 0.5 * (img + (2.0 * op.denoiser(r) - r))
    return out.astype(img.dtype, copy=False)


_EVAL = {"pgd": eval_pgd, "hqs": eval_hqs, "admm": eval_admm}


def evaluate(op: PnPOperator, x) -> np.ndarray:
    return _EVAL[op.kind](op, x)


def _bad_iterate(x: np.ndarray, guard: float) -> bool:
    return (not bool(np.all(np.isfinite(x)))) or float(np.max(np.abs(x))) > guard


def _state_row(k: int, x: np.ndarray, ground_truth) -> TraceRow:
    value = None
    if ground_truth is not None and bool(np.all(np.isfinite(x))):
        value = psnr(ground_truth, x)
    return TraceRow(k=k, psnr=value)


def vanilla_iterate(
    op: Callable[[np.ndarray], np.ndarray],
    x0,
    iters: int,
    ground_truth=None,
    observer: Callable[[int, np.ndarray], None] | None = None,
    guard: float = DEFAULT_GUARD,
) -> IterationTrace:
    """Iterate x_{k+1} = T(x_k), recording PSNR and residuals.

    Never raises on numeric blow-up: when an iterate goes non-finite or
    its max magnitude exceeds ``guard``, the trace is marked diverged and
    the loop stops.  A bridge transport failure likewise stops the run with
    ``bridge_failed`` set instead of propagating.  ``observer`` (if given)
    is called as ``observer(k, x_k)`` for every recorded iterate.
    """
    if iters < 0:
        raise ValueError(f"iters must be >= 0, got {iters}")
    x = as_image(x0).copy()
    t0 = time.perf_counter()
    trace = IterationTrace(x_initial=x.copy())
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
            x_next = as_image(op(x))
        except BridgeError:
            trace.bridge_failed = True
            break
        step = trace.rows[-1]
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


def _safe_norm(d: np.ndarray) -> float | None:
    v = float(np.linalg.norm(d.astype(np.float64, copy=False)))
    return v if np.isfinite(v) else None


def _track_peak(trace: IterationTrace, k: int, x: np.ndarray) -> None:
    row = trace.rows[-1]
    if row.psnr is None:
        return
    best = None if trace.peak_iter is None else trace.rows[trace.peak_iter].psnr
    if best is None or row.psnr > best:
        trace.peak_iter = k
        trace.x_peak = x.copy()
