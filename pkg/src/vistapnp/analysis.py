"""Empirical operator diagnostics.

Sampled contraction ratios, power-iteration spectral norms, and stability
probes used to check the contraction/expansion properties the solvers rely
on.  Sampled estimators are lower bounds on the true operator constants;
every report records the seed that generated its samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

# Largest flattened dimension for which a black-box linear operator is
# materialized column-by-column when no adjoint is supplied.
_MATERIALIZE_LIMIT = 4096

_PERTURBATION_SCALES = (1e-1, 1e-3)


def sample_image_pairs(dims, count: int, rng: np.random.Generator):
    """Yield ``count`` float64 image pairs for ratio estimation.

    Cycles through independent uniform pairs and near-duplicate pairs at
    perturbation scales 1e-1 and 1e-3, so both global and local behavior
    get sampled.  Degenerate (identical) pairs are redrawn.
    """
    dims = tuple(dims)
    kinds = (None,) + _PERTURBATION_SCALES
    for i in range(count):
        scale = kinds[i % len(kinds)]
        while True:
            x1 = rng.uniform(0.0, 1.0, size=dims)
            if scale is None:
                x2 = rng.uniform(0.0, 1.0, size=dims)
            else:
                x2 = x1 + scale * rng.standard_normal(dims)
            if float(np.linalg.norm(x1 - x2)) > 0.0:
                break
        yield x1, x2


@dataclass(frozen=True)
class ContractionReport:
    max_ratio: float
    mean_ratio: float
    num_pairs: int
    seed: int
    descriptor: str


def contraction_ratio(
    op: Callable[[np.ndarray], np.ndarray],
    dims,
    pairs: int,
    seed: int,
    descriptor: str | None = None,
) -> ContractionReport:
    """Estimate sup ||op(x1) - op(x2)|| / ||x1 - x2|| by sampling.

    The estimate is a lower bound on the true Lipschitz constant: a
    max_ratio below 1 is evidence of (not proof of) contractivity, while a
    ratio above 1 disproves nonexpansiveness outright.
    """
    if pairs < 1:
        raise ValueError(f"pairs must be >= 1, got {pairs}")
    rng = np.random.default_rng(seed)
    ratios = np.empty(pairs, dtype=np.float64)
    for i, (x1, x2) in enumerate(sample_image_pairs(dims, pairs, rng)):
        d = float(np.linalg.norm(x1 - x2))
        ratios[i] = float(np.linalg.norm(np.asarray(op(x1)) - np.asarray(op(x2)))) / d
    if descriptor is None:
        descriptor = getattr(op, "descriptor", getattr(op, "__name__", repr(op)))
    return ContractionReport(
        max_ratio=float(ratios.max()),
        mean_ratio=float(ratios.mean()),
        num_pairs=pairs,
        seed=seed,
        descriptor=str(descriptor),
    )


class NormEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


def _probe_linearity(op, dims, rng, rtol=1e-6):
    for _ in range(3):
        x = rng.standard_normal(dims)
        u = rng.standard_normal(dims)
        a, b = rng.uniform(-2.0, 2.0, size=2)
        lhs = np.asarray(op(a * x + b * u), dtype=np.float64)
        rhs = a * np.asarray(op(x), dtype=np.float64) + b * np.asarray(op(u), dtype=np.float64)
        scale = max(1.0, float(np.linalg.norm(rhs)))
        if float(np.linalg.norm(lhs - rhs)) > rtol * scale:
            raise ValueError("operator failed the linearity probe; not a linear map")


def linear_operator_norm(
    op: Callable[[np.ndarray], np.ndarray],
    dims,
    iters: int = 500,
    tol: float = 1e-6,
    adjoint: Callable[[np.ndarray], np.ndarray] | None = None,
    assume_linear: bool = False,
    seed: int = 0,
) -> NormEstimate:
    """Spectral norm of a linear map by power iteration on ``op* . op``.

    The operator is first probed for linearity on random inputs (declare
    ``assume_linear=True`` to skip).  Without an ``adjoint`` the map is
    materialized column-by-column, which is limited to small dims; pass the
    adjoint for anything bigger.  ``converged`` reports whether successive
    estimates agreed to ``tol`` relative before ``iters`` ran out.
    """
    dims = tuple(dims)
    rng = np.random.default_rng(seed)
    if not assume_linear:
        _probe_linearity(op, dims, rng)

    n = int(np.prod(dims))
    if adjoint is None:
        if n > _MATERIALIZE_LIMIT:
            raise ValueError(
                f"dims {dims} flatten to {n} > {_MATERIALIZE_LIMIT}; "
                "provide adjoint= for large operators"
            )
        mat = np.empty((n, n), dtype=np.float64)
        basis = np.zeros(dims, dtype=np.float64)
        flat = basis.reshape(-1)
        for j in range(n):
            flat[j] = 1.0
            mat[:, j] = np.asarray(op(basis), dtype=np.float64).reshape(-1)
            flat[j] = 0.0
        fwd = lambda v: mat @ v
        adj = lambda v: mat.T @ v
        v = rng.standard_normal(n)
    else:
        fwd = lambda v: np.asarray(op(v), dtype=np.float64)
        adj = lambda v: np.asarray(adjoint(v), dtype=np.float64)
        v = rng.standard_normal(dims)

    v = v / np.linalg.norm(v)
    est_prev = np.inf
    iterations = 0
    converged = False
    est = 0.0
    for iterations in range(1, iters + 1):
        w = adj(fwd(v))
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return NormEstimate(0.0, True, iterations)
        est = float(np.sqrt(lam))
        v = w / lam
        if abs(est - est_prev) <= tol * max(est, 1e-300):
            converged = True
            break
        est_prev = est
    return NormEstimate(est, converged, iterations)


def eta_stability_probe(
    t: Callable[[np.ndarray], np.ndarray],
    p,
    samples: int,
    seed: int,
    scales=(1e-3, 1e-2, 1e-1, 1.0),
) -> float:
    """Max of ||T(x) - p|| / ||x - p|| over random x at several distance
    scales from p.  Values above 1 expose instability of T around p."""
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    rng = np.random.default_rng(seed)
    p64 = np.asarray(p, dtype=np.float64)
    base = max(1.0, float(np.linalg.norm(p64)))
    worst = 0.0
    for i in range(samples):
        scale = scales[i % len(scales)]
        d = rng.standard_normal(p64.shape)
        d = d / float(np.linalg.norm(d))
        x = p64 + (scale * base) * d
        dist = float(np.linalg.norm(x - p64))
        ratio = float(np.linalg.norm(np.asarray(t(x), dtype=np.float64) - p64)) / dist
        worst = max(worst, ratio)
    return worst
