"""End-to-end acceptance battery.

Each test exercises one numbered claim about the package at desk scale and
prints a PASS/FAIL line through ``record_criterion`` (collected again in
the terminal summary).  Shared expensive runs live in module-scoped
fixtures.  All stabilized runs here use float64 iterates: the per-step
contraction bound is checked to 1e-6 relative slack, which float32
round-off of the blended update does not respect.
"""

import time

import numpy as np
import pytest

import vistapnp as v
from vistapnp.cli import resolve_config, run_config

from conftest import make_deblur_problem, make_sr_problem, record_criterion


def _norm(a):
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64).ravel()))


# ---------------------------------------------------------------------------
# Shared runs.


@pytest.fixture(scope="module")
def synthetic_run():
    """Exact-ratio construction: T expands distance to p by 1.4 (unitary
    roll), S shrinks by 0.6; the adaptive weight lands on 0.5 and the
    blended per-step rate on exactly 1."""
    p = v.as_image(np.full((16, 16, 1), 0.5))

    def t(x):
        return p + 1.4 * np.roll(x - p, 1, axis=0)

    def s(x):
        return p + 0.6 * (x - p)

    rng = np.random.default_rng(1)
    x0 = p + 0.1 * rng.standard_normal((16, 16, 1))
    cfg = v.ViscosityConfig(theta_cap=0.5, fp_tol=1e-6, fp_max_iter=200)
    p_hat = v.fixed_point(s, x0, tol=cfg.fp_tol, max_iter=cfg.fp_max_iter).point
    dists = []
    trace = v.vista_iterate(
        t, s, x0, 1000, cfg,
        observer=lambda k, x: dists.append(_norm(x - p_hat)),
    )
    assert np.array_equal(trace.fixed_point, p_hat)
    return {"trace": trace, "dists": dists, "d0": _norm(x0 - p_hat), "cap": 0.5}


@pytest.fixture(scope="module")
def stabilized_deblur():
    """The divergence-and-cure pair: expansive unsharp denoiser inside
    plain PGD blows up on a 128x128 deblurring problem; the same operator
    damped toward the frozen-weights viscosity map stays put."""
    t0 = time.perf_counter()
    gt = v.phantom("shapes", 128)
    model = v.CircularConvolution(v.gaussian_kernel(25, 1.6), (128, 128))
    y = v.add_gaussian_noise(model.apply(gt), 0.01, np.random.default_rng([11, 0]))
    problem = v.Problem(model, y)
    x0 = y.copy()
    op = v.pgd_operator(problem, v.unsharp_expansive(1.5, 0.4), 1.0)

    vanilla = v.vanilla_iterate(op, x0, 500, ground_truth=gt)

    s = v.nlm_viscosity_operator(problem, x0, rho=1.9)
    cfg = v.ViscosityConfig(theta_cap=0.2)
    p_hat = v.fixed_point(s, x0, tol=cfg.fp_tol, max_iter=cfg.fp_max_iter).point
    dists = []
    vista = v.vista_iterate(
        op, s, x0, 500, cfg, ground_truth=gt,
        observer=lambda k, x: dists.append(_norm(x - p_hat)),
    )
    assert np.array_equal(vista.fixed_point, p_hat)
    return {
        "vanilla": vanilla,
        "vista": vista,
        "dists": dists,
        "cap": 0.2,
        "wall": time.perf_counter() - t0,
    }


# ---------------------------------------------------------------------------
# Criteria.


def test_criterion_01_adjoints_pass_the_dot_test(rng):
    t0 = time.perf_counter()
    models = {
        "identity": v.Identity((32, 32)),
        "gaussian_blur": v.CircularConvolution(v.gaussian_kernel(9, 1.6), (32, 32)),
        "motion_blur": v.CircularConvolution(v.motion_kernel(9, 30.0), (32, 32)),
        "downsampled": v.DownsampledConvolution(v.gaussian_kernel(9, 2.0), 2, (32, 32)),
    }
    worst = 0.0
    for model in models.values():
        for _ in range(100):
            x = rng.random((32, 32, 1))
            ax = model.apply(x)
            u = rng.random(ax.shape)
            lhs = float(np.vdot(ax, u))
            rhs = float(np.vdot(x, model.adjoint(u)))
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-5 and elapsed < 10.0
    record_criterion(
        1, "adjoint dot test, 100 trials x 4 models", ok,
        f"max_rel={worst:.2e}, {elapsed:.2f}s",
    )
    assert ok


def test_criterion_02_prox_solves_its_normal_equations(rng):
    worst = 0.0
    mus = (0.1, 0.3, 1.0, 3.0, 10.0)
    for i in range(20):
        if i < 10:
            problem, _ = make_deblur_problem(size=32, seed=i)
        else:
            problem, _ = make_sr_problem(size=32, factor=2, seed=i)
        mu = mus[i % len(mus)]
        z = v.as_image(rng.random(problem.model.in_shape + (1,)))
        out = v.prox_f(problem, z, mu, tol=1e-6, max_iter=200)
        lhs = problem.model.adjoint(problem.model.apply(out)) + out / mu
        rhs = problem.model.adjoint(problem.observation) + z / mu
        worst = max(worst, _norm(lhs - rhs) / _norm(rhs))

    closed_worst = 0.0
    y = v.as_image(rng.random((16, 16, 1)))
    ident = v.Problem(v.Identity((16, 16)), y)
    for i in range(20):
        z = v.as_image(rng.random((16, 16, 1)))
        mu = mus[i % len(mus)]
        got = v.prox_f(ident, z, mu)
        want = (mu * y + z) / (mu + 1.0)
        closed_worst = max(closed_worst, float(np.abs(got - want).max()))

    ok = worst <= 1e-6 and closed_worst <= 1e-7
    record_criterion(
        2, "prox normal-equation residuals", ok,
        f"max_rel={worst:.2e}, identity_max={closed_worst:.2e}",
    )
    assert ok


def test_criterion_03_operators_reduce_with_identity_denoiser(rng, identity_denoiser):
    problem, _ = make_deblur_problem(size=32)
    pgd = v.pgd_operator(problem, identity_denoiser, 0.7)
    hqs = v.hqs_operator(problem, identity_denoiser, 0.8)
    admm = v.admm_operator(problem, identity_denoiser, 1.2)
    worst = 0.0
    for _ in range(20):
        x = v.as_image(rng.random((32, 32, 1)))
        worst = max(worst, float(np.abs(pgd(x) - (x - 0.7 * v.grad_f(problem, x))).max()))
        worst = max(worst, float(np.abs(hqs(x) - v.prox_f(problem, x, 0.8)).max()))
        worst = max(worst, float(np.abs(admm(x) - v.prox_f(problem, x, 1.2)).max()))
    ok = worst <= 1e-6
    record_criterion(3, "identity-denoiser operator reductions", ok, f"max_abs={worst:.2e}")
    assert ok


def test_criterion_04_viscosity_operator_contracts():
    t0 = time.perf_counter()
    problem, _ = make_deblur_problem(size=64, ksize=25, sigma=1.6)
    s = v.nlm_viscosity_operator(problem, problem.observation, rho=1.9,
                                 window_radius=1, patch_radius=1, h=60 / 255)
    report = v.contraction_ratio(s, (64, 64, 1), pairs=200, seed=0)
    elapsed = time.perf_counter() - t0
    ok = report.max_ratio < 1.0 and elapsed < 120.0
    record_criterion(
        4, "viscosity operator is a sampled contraction", ok,
        f"max_ratio={report.max_ratio:.4f}, {elapsed:.1f}s",
    )
    assert ok


def test_criterion_05_constant_damping_threshold():
    dims = (16, 16, 1)
    t = lambda x: 1.3 * np.roll(x, 1, axis=1)  # noqa: E731
    s = lambda x: 0.5 * x  # noqa: E731
    norm_t = v.linear_operator_norm(t, dims).value

    def blend(theta):
        op = lambda x: (1 - theta) * t(x) + theta * s(x)  # noqa: E731
        return v.linear_operator_norm(op, dims).value

    above, below = blend(0.4), blend(0.2)
    ok = (abs(norm_t - 1.3) <= 1e-6) and (above <= 0.98 + 1e-3) and (below > 1.0)
    record_criterion(
        5, "damping threshold separates stable from unstable blends", ok,
        f"|T|={norm_t:.4f}, theta=.4 -> {above:.4f}, theta=.2 -> {below:.4f}",
    )
    assert ok


def _check_step_bound(trace, dists):
    """Max violation of ||x_{k+1}-p|| <= ((1-th)eta + th*beta)||x_k-p||."""
    worst = 0.0
    checked = 0
    for k, row in enumerate(trace.rows[:-1]):
        if row.eta is None or dists[k] == 0.0:
            continue
        rate = (1.0 - row.theta) * row.eta + row.theta * row.beta
        bound = rate * dists[k]
        if bound > 0:
            worst = max(worst, dists[k + 1] / bound)
        checked += 1
    return worst, checked


def test_criterion_06_per_step_contraction_bound(synthetic_run, stabilized_deblur):
    w1, c1 = _check_step_bound(synthetic_run["trace"], synthetic_run["dists"])
    w2, c2 = _check_step_bound(stabilized_deblur["vista"], stabilized_deblur["dists"])
    worst, checked = max(w1, w2), c1 + c2
    stays_bounded = max(synthetic_run["dists"]) <= synthetic_run["d0"] * (1.0 + 1e-6)
    long_enough = len(synthetic_run["dists"]) == 1001
    ok = worst <= 1.0 + 1e-6 and stays_bounded and long_enough and checked > 500
    record_criterion(
        6, "blended contraction bound holds at every step", ok,
        f"max_ratio_to_bound={worst:.9f} over {checked} steps; "
        f"1000-step drift={(max(synthetic_run['dists']) / synthetic_run['d0'] - 1):.2e}",
    )
    assert ok


def test_criterion_07_damping_weight_range(synthetic_run, stabilized_deblur):
    ok = True
    detail = []
    for name, run, cap in (
        ("synthetic", synthetic_run["trace"], synthetic_run["cap"]),
        ("deblur", stabilized_deblur["vista"], stabilized_deblur["cap"]),
    ):
        rows = [r for r in run.rows[:-1] if r.theta is not None]
        in_range = all(0.0 <= r.theta <= cap for r in rows)
        zero_iff = all(
            r.theta == 0.0
            for r in rows
            if r.eta is not None and r.eta <= 1.0 and not r.near_p
        )
        ok = ok and in_range and zero_iff
        detail.append(f"{name}: {len(rows)} rows")
    record_criterion(7, "damping weight stays in [0, cap], zero when stable",
                     ok, "; ".join(detail))
    assert ok


def test_criterion_08_divergence_reproduced_and_cured(stabilized_deblur):
    vanilla, vista = stabilized_deblur["vanilla"], stabilized_deblur["vista"]
    v_sum = v.summarize(vanilla, asymptotic_at=500)
    vanilla_bad = vanilla.diverged or (v_sum.peak_psnr - v_sum.asymptotic_psnr >= 5.0)
    s_sum = v.summarize(vista, asymptotic_at=500)
    gap = s_sum.peak_psnr - s_sum.asymptotic_psnr
    cured = (not vista.diverged) and (not vista.bridge_failed) and gap <= 1.0
    elapsed = stabilized_deblur["wall"]
    ok = vanilla_bad and cured and elapsed < 300.0
    record_criterion(
        8, "expansive denoiser diverges; damped run stays put", ok,
        f"vanilla diverged@{vanilla.rows[-1].k}, stabilized peak={s_sum.peak_psnr:.2f}dB "
        f"gap={gap:.2e}dB, {elapsed:.1f}s",
    )
    assert ok


def test_criterion_09_fast_nlm_matches_naive_and_is_faster(rng):
    worst = 0.0
    for _ in range(10):
        x = rng.random((16, 16, 1))
        worst = max(worst, float(np.abs(
            v.nlm_denoise(x, 1, 1, 60 / 255) - v.nlm_denoise_naive(x, 1, 1, 60 / 255)
        ).max()))
    big = rng.random((128, 128, 1))
    t0 = time.perf_counter()
    v.nlm_denoise(big, 1, 1, 60 / 255)
    t_fast = time.perf_counter() - t0
    t0 = time.perf_counter()
    v.nlm_denoise_naive(big, 1, 1, 60 / 255)
    t_naive = time.perf_counter() - t0
    speedup = t_naive / t_fast
    ok = worst <= 1e-5 and speedup >= 5.0
    record_criterion(
        9, "vectorized NLM matches the naive oracle and is faster", ok,
        f"max_abs={worst:.2e}, speedup={speedup:.0f}x",
    )
    assert ok


def test_criterion_10_symmetrized_denoiser(rng):
    d = v.gaussian_smoother(1.2)
    wrapped = v.equivariant_wrap(d, "averaged")
    worst = 0.0
    for _ in range(3):
        x = rng.random((32, 32, 1))
        worst = max(worst, float(np.abs(wrapped(x) - d(x)).max()))

    images = [rng.random((16, 16, 1)) for _ in range(6)]
    runs = []
    for _ in range(2):
        sampled = v.equivariant_wrap(d, "sampled", rng=np.random.default_rng(7))
        runs.append([sampled(img) for img in images])
    deterministic = all(np.array_equal(a, b) for a, b in zip(*runs))

    ok = worst <= 1e-5 and deterministic
    record_criterion(
        10, "dihedral wrap: averaged preserves isotropic filters; sampled is seeded",
        ok, f"max_abs={worst:.2e}",
    )
    assert ok


def test_criterion_11_runs_are_byte_reproducible(tmp_path):
    cfg = resolve_config({
        "image": {"phantom": "shapes", "size": 16},
        "task": {"name": "gaussian_deblur", "kernel": {"size": 9, "sigma": 1.6}},
        "noise_sigma": 0.01,
        "seed": 3,
        "algorithm": {"name": "pgd", "gamma": 0.9},
        "denoiser": {"name": "dsg_nlm", "h": 0.3},
        "method": {"name": "vista", "viscosity": {"name": "nlm", "h": 0.3}},
        "iters": 20,
        "asymptotic_at": 20,
    })
    run_config(cfg, tmp_path / "a")
    run_config(cfg, tmp_path / "b")
    same = (tmp_path / "a/trace.csv").read_bytes() == (tmp_path / "b/trace.csv").read_bytes()
    rows = (tmp_path / "a/trace.csv").read_text().splitlines()
    ok = same and len(rows) == 22
    record_criterion(11, "same seed, byte-identical trace", ok,
                     f"{len(rows) - 1} rows")
    assert ok
