import numpy as np
import pytest

import vistapnp as v
from vistapnp.forward import ProxSolveError


def dot(a, b):
    return float(np.vdot(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)))


class TestGaussianKernel:
    def test_size_one(self):
        k = v.gaussian_kernel(1, 2.0)
        assert np.array_equal(k.taps, [[1.0]])

    def test_sum_is_one(self):
        for size, sigma in ((3, 0.5), (25, 1.6), (9, 4.0)):
            assert abs(v.gaussian_kernel(size, sigma).taps.sum() - 1.0) < 1e-9

    def test_25x25_sigma_16_center_max_and_symmetric(self):
        taps = v.gaussian_kernel(25, 1.6).taps
        assert taps[12, 12] == taps.max()
        assert np.allclose(taps, taps[::-1, :]) and np.allclose(taps, taps[:, ::-1])
        assert np.allclose(taps, taps.T)

    def test_even_size_rejected(self):
        with pytest.raises(ValueError):
            v.gaussian_kernel(4, 1.0)

    def test_bad_sigma_rejected(self):
        with pytest.raises(ValueError):
            v.gaussian_kernel(3, 0.0)


class TestMotionKernel:
    def test_sum_is_one(self):
        assert abs(v.motion_kernel(15, 45.0).taps.sum() - 1.0) < 1e-9

    def test_length_one_is_delta(self):
        k = v.motion_kernel(1, 30.0)
        assert k.taps.max() == pytest.approx(1.0)

    def test_horizontal_line(self):
        k = v.motion_kernel(5, 0.0)
        # all mass on the center row
        center = k.taps.shape[0] // 2
        assert k.taps[center].sum() == pytest.approx(1.0, abs=1e-9)

    def test_bad_length(self):
        with pytest.raises(ValueError):
            v.motion_kernel(0)


class TestLoadKernel:
    def test_identity_file(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("1 1\n1.0\n")
        assert np.array_equal(v.load_kernel(p).taps, [[1.0]])

    def test_renormalizes_small_deviation(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("1 3\n0.2 0.5995 0.2\n")
        k = v.load_kernel(p)
        assert abs(k.taps.sum() - 1.0) < 1e-12

    def test_large_sum_deviation_rejected(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("1 2\n0.3 0.3\n")
        with pytest.raises(ValueError, match="sum"):
            v.load_kernel(p)

    def test_non_numeric_token_names_line(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("2 2\n0.25 0.25\n0.25 oops\n")
        with pytest.raises(ValueError, match="line 3"):
            v.load_kernel(p)

    def test_wrong_row_width_names_line(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("2 2\n0.25 0.25 0.25\n0.25 0.25\n")
        with pytest.raises(ValueError, match="line 2"):
            v.load_kernel(p)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "k.txt"
        p.write_text("banana\n")
        with pytest.raises(ValueError, match="line 1"):
            v.load_kernel(p)


class TestApply:
    def test_identity_passthrough(self, rng):
        x = rng.random((8, 8, 1))
        assert np.array_equal(v.Identity().apply(x), v.as_image(x))

    def test_one_tap_kernel_is_identity(self, rng):
        x = rng.random((8, 8, 1))
        m = v.CircularConvolution(v.Kernel(np.array([[1.0]])), (8, 8))
        assert np.allclose(m.apply(x), v.as_image(x), atol=1e-12)

    def test_uniform_kernel_on_delta(self):
        x = np.zeros((8, 8, 1))
        x[3, 3, 0] = 1.0
        m = v.CircularConvolution(v.Kernel(np.full((3, 3), 1 / 9)), (8, 8))
        out = m.apply(x)[:, :, 0]
        assert np.allclose(out[2:5, 2:5], 1 / 9, atol=1e-12)
        assert out[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_periodic_wraparound(self):
        x = np.zeros((8, 8, 1))
        x[0, 0, 0] = 1.0
        m = v.CircularConvolution(v.Kernel(np.full((3, 3), 1 / 9)), (8, 8))
        out = m.apply(x)[:, :, 0]
        assert out[7, 7] == pytest.approx(1 / 9, abs=1e-12)

    def test_downsample_dims(self, rng):
        m = v.DownsampledConvolution(v.gaussian_kernel(5, 1.0), 2, (16, 16))
        out = m.apply(rng.random((16, 16, 1)))
        assert out.shape == (8, 8, 1)
        assert m.adjoint(out).shape == (16, 16, 1)

    def test_downsample_requires_divisible(self):
        with pytest.raises(ValueError):
            v.DownsampledConvolution(v.gaussian_kernel(3, 1.0), 3, (16, 16))

    def test_dims_checked(self, rng):
        m = v.CircularConvolution(v.gaussian_kernel(3, 1.0), (8, 8))
        with pytest.raises(ValueError):
            m.apply(rng.random((9, 8, 1)))

    def test_dtype_preserved(self, rng):
        x = rng.random((8, 8, 1)).astype(np.float32)
        m = v.CircularConvolution(v.gaussian_kernel(3, 1.0), (8, 8))
        assert m.apply(x).dtype == np.float32


def _models_32():
    k = v.gaussian_kernel(7, 1.3)
    return [
        ("identity", v.Identity((32, 32))),
        ("circular", v.CircularConvolution(k, (32, 32))),
        ("downsampled", v.DownsampledConvolution(k, 2, (32, 32))),
        ("motion", v.CircularConvolution(v.motion_kernel(9, 30.0), (32, 32))),
    ]


class TestAdjoint:
    def test_identity_adjoint_is_input(self, rng):
        u = rng.random((8, 8, 1))
        assert np.array_equal(v.Identity().adjoint(u), v.as_image(u))

    @pytest.mark.parametrize("name,model", _models_32())
    def test_dot_product_identity(self, name, model):
        rng = np.random.default_rng(hash(name) % 2**32)
        for _ in range(20):
            x = rng.standard_normal((32, 32, 1))
            u = rng.standard_normal(model.out_shape + (1,))
            lhs = dot(model.apply(x), u)
            rhs = dot(x, model.adjoint(u))
            assert abs(lhs - rhs) <= 1e-5 * max(1.0, abs(lhs))

    def test_symmetric_kernel_self_adjoint(self, rng):
        m = v.CircularConvolution(v.gaussian_kernel(5, 1.1), (16, 16))
        x = rng.standard_normal((16, 16, 1))
        assert np.allclose(m.apply(x), m.adjoint(x), atol=1e-12)


class TestGradF:
    def test_identity_model_residual(self, rng):
        y = rng.random((8, 8, 1))
        x = rng.random((8, 8, 1))
        prob = v.Problem(v.Identity((8, 8)), y)
        assert np.allclose(v.grad_f(prob, x), v.as_image(x) - v.as_image(y), atol=1e-12)

    def test_zero_at_exact_solution(self, rng):
        x = rng.random((16, 16, 1))
        m = v.CircularConvolution(v.gaussian_kernel(5, 1.0), (16, 16))
        prob = v.Problem(m, m.apply(x))
        assert np.linalg.norm(v.grad_f(prob, x)) < 1e-10

    def test_matches_finite_differences(self, rng):
        # central differences of f(x) = 0.5||Ax - y||^2 at 30 random coords
        m = v.CircularConvolution(v.gaussian_kernel(5, 1.2), (16, 16))
        y = rng.random((16, 16, 1))
        prob = v.Problem(m, y)
        x = rng.random((16, 16, 1))

        def f(z):
            r = m.apply(z) - v.as_image(y)
            return 0.5 * float(np.sum(r.astype(np.float64) ** 2))

        g = v.grad_f(prob, x)
        eps = 1e-5
        idx = rng.integers(0, 16, size=(30, 2))
        for i, j in idx:
            e = np.zeros_like(x)
            e[i, j, 0] = eps
            fd = (f(x + e) - f(x - e)) / (2 * eps)
            assert abs(fd - g[i, j, 0]) <= 1e-3 * max(1.0, abs(fd))


class TestProxF:
    def test_identity_closed_form(self, rng):
        y = rng.random((8, 8, 1))
        z = rng.random((8, 8, 1))
        prob = v.Problem(v.Identity((8, 8)), y)
        for mu in (0.1, 1.0, 10.0):
            expect = (mu * v.as_image(y) + v.as_image(z)) / (mu + 1.0)
            assert np.allclose(v.prox_f(prob, z, mu), expect, atol=1e-7)

    def test_tiny_mu_returns_input(self, rng):
        m = v.CircularConvolution(v.gaussian_kernel(5, 1.0), (16, 16))
        prob = v.Problem(m, rng.random((16, 16, 1)))
        z = rng.random((16, 16, 1))
        assert np.allclose(v.prox_f(prob, z, 1e-8), z, atol=1e-4)

    def test_normal_equation_residual(self, rng):
        m = v.CircularConvolution(v.gaussian_kernel(7, 1.6), (16, 16))
        prob = v.Problem(m, rng.random((16, 16, 1)))
        z = rng.random((16, 16, 1))
        mu = 2.0
        x = v.prox_f(prob, z, mu).astype(np.float64)
        rhs = m.adjoint(prob.observation.astype(np.float64)) + z / mu
        r = rhs - (m.adjoint(m.apply(x)) + x / mu)
        assert np.linalg.norm(r) <= 1e-6 * np.linalg.norm(rhs)

    def test_local_optimality_probe(self, rng):
        # objective at the prox output beats 50 random perturbations
        m = v.CircularConvolution(v.gaussian_kernel(5, 1.2), (16, 16))
        y = rng.random((16, 16, 1))
        prob = v.Problem(m, y)
        z = rng.random((16, 16, 1))
        mu = 0.5

        def objective(x):
            r = m.apply(x) - v.as_image(y)
            data = 0.5 * float(np.sum(np.asarray(r, dtype=np.float64) ** 2))
            prox = float(np.sum((np.asarray(x - z, dtype=np.float64)) ** 2)) / (2 * mu)
            return data + prox

        xstar = v.prox_f(prob, z, mu)
        base = objective(xstar)
        for _ in range(50):
            delta = rng.standard_normal(xstar.shape) * rng.choice([1e-3, 1e-2, 1e-1])
            assert objective(xstar + delta) >= base - 1e-10

    def test_mu_must_be_positive(self, deblur_problem):
        prob, _ = deblur_problem
        with pytest.raises(ValueError):
            v.prox_f(prob, prob.observation, 0.0)

    def test_nonconvergence_raises_with_details(self, rng):
        m = v.CircularConvolution(v.gaussian_kernel(7, 1.6), (16, 16))
        prob = v.Problem(m, rng.random((16, 16, 1)))
        with pytest.raises(ProxSolveError) as e:
            v.prox_f(prob, rng.random((16, 16, 1)), mu=1e6, tol=1e-14, max_iter=1)
        assert e.value.rel_residual > 0 and e.value.iterations == 1

    def test_dtype_preserved(self, rng):
        prob = v.Problem(v.Identity((8, 8)), rng.random((8, 8, 1)).astype(np.float32))
        out = v.prox_f(prob, rng.random((8, 8, 1)).astype(np.float32), 1.0)
        assert out.dtype == np.float32


class TestProblem:
    def test_observation_dims_validated(self, rng):
        m = v.CircularConvolution(v.gaussian_kernel(3, 1.0), (8, 8))
        with pytest.raises(ValueError):
            v.Problem(m, rng.random((7, 8, 1)))

    def test_downsampled_observation_dims(self, rng):
        m = v.DownsampledConvolution(v.gaussian_kernel(3, 1.0), 2, (8, 8))
        v.Problem(m, rng.random((4, 4, 1)))  # correct coarse dims pass
        with pytest.raises(ValueError):
            v.Problem(m, rng.random((8, 8, 1)))
