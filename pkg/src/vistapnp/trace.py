"""Iteration traces and their summaries.

A trace records one reconstruction run.  Row ``k`` describes iterate x_k
together with the step taken FROM it: ``theta``/``eta``/``beta`` are the
damping quantities used to produce x_{k+1} and ``residual`` is
``||x_{k+1} - x_k||``.  The final row carries only the last iterate's PSNR,
so a completed run of N iterations has N + 1 rows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass
class TraceRow:
    k: int
    psnr: float | None = None
    theta: float | None = None
    eta: float | None = None
    beta: float | None = None
    residual: float | None = None
    near_p: bool = False
    diverged: bool = False


@dataclass
class IterationTrace:
    rows: list[TraceRow] = field(default_factory=list)
    diverged: bool = False
    bridge_failed: bool = False
    wall_seconds: float = 0.0
    # Kept iterates (dtype of the run); enough to save the interesting images.
    x_initial: np.ndarray | None = None
    x_peak: np.ndarray | None = None
    peak_iter: int | None = None
    x_final: np.ndarray | None = None
    # Populated by viscosity runs only.
    fixed_point: np.ndarray | None = None
    fixed_point_residual: float | None = None
    fixed_point_converged: bool | None = None

    def psnr_series(self) -> list[float | None]:
        return [r.psnr for r in self.rows]


@dataclass(frozen=True)
class TraceSummary:
    peak_psnr: float
    peak_iter: int
    asymptotic_psnr: float
    asymptotic_iter: int
    truncated: bool
    diverged: bool


def summarize(trace: IterationTrace, asymptotic_at: int) -> TraceSummary:
    """Peak PSNR over the whole trace plus the PSNR at a fixed iteration.

    ``asymptotic_at`` is clamped to the last recorded row when the run was
    truncated (divergence guard, bridge failure); ``truncated`` reports
    whether that happened.
    """
    if asymptotic_at < 0:
        raise ValueError(f"asymptotic_at must be >= 0, got {asymptotic_at}")
    scored = [(r.k, r.psnr) for r in trace.rows if r.psnr is not None]
    if not scored:
        raise ValueError("trace has no PSNR entries (no ground truth supplied)")
    peak_iter, peak = max(scored, key=lambda kv: (kv[1], -kv[0]))
    last_k = trace.rows[-1].k
    asym_iter = min(asymptotic_at, last_k)
    by_k = dict(scored)
    # Walk back to the nearest scored row if the requested one has no PSNR.
    while asym_iter not in by_k and asym_iter > 0:
        asym_iter -= 1
    return TraceSummary(
        peak_psnr=float(peak),
        peak_iter=int(peak_iter),
        asymptotic_psnr=float(by_k[asym_iter]),
        asymptotic_iter=int(asym_iter),
        truncated=asym_iter != asymptotic_at,
        diverged=trace.diverged,
    )


_CSV_COLUMNS = ("k", "psnr", "theta", "eta", "beta", "residual", "near_p", "diverged")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float) and not np.isfinite(v):
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_trace_csv(trace: IterationTrace, path) -> None:
    """Write the per-iteration trace; deterministic byte-for-byte for a
    deterministic run (floats use shortest round-trip formatting)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_CSV_COLUMNS)
        for r in trace.rows:
            writer.writerow(
                [
                    r.k,
                    _fmt(r.psnr),
                    _fmt(r.theta),
                    _fmt(r.eta),
                    _fmt(r.beta),
                    _fmt(r.residual),
                    _fmt(r.near_p),
                    _fmt(r.diverged),
                ]
            )
