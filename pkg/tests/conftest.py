import numpy as np
import pytest

import vistapnp as v

# Collected by the acceptance tests; printed as a summary block at the end
# of the pytest run so the per-criterion verdicts are always visible.
ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


def record_criterion(num: int, desc: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.append((num, desc, ok, detail))
    status = "PASS" if ok else "FAIL"
    print(f"[criterion {num:2d}] {status} {desc}" + (f"  ({detail})" if detail else ""))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, desc, ok, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if ok else "FAIL"
        line = f"[criterion {num:2d}] {status} {desc}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def make_deblur_problem(size=32, sigma=1.6, ksize=9, noise=0.01, seed=0, channels=1):
    """Small Gaussian deblurring problem with known ground truth."""
    gt = v.phantom("shapes", size, channels)
    model = v.CircularConvolution(v.gaussian_kernel(ksize, sigma), (size, size))
    y = v.add_gaussian_noise(model.apply(gt), noise, np.random.default_rng([seed, 0]))
    return v.Problem(model, y), gt


def make_sr_problem(size=32, factor=2, noise=0.01, seed=0):
    gt = v.phantom("rings", size)
    model = v.DownsampledConvolution(v.gaussian_kernel(9, float(factor)), factor, (size, size))
    y = v.add_gaussian_noise(model.apply(gt), noise, np.random.default_rng([seed, 0]))
    return v.Problem(model, y), gt


@pytest.fixture
def deblur_problem():
    return make_deblur_problem()


@pytest.fixture
def identity_denoiser():
    return v.Denoiser(lambda x: v.as_image(x).copy(), "identity", {})
