"""Tests for src/nn/gradcheck.py: backward() against central differences."""

import numpy as np
import pytest

from src.errors import ConfigError
from src.nn.gradcheck import (
    GRAD_FLOOR,
    GRADCHECK_TOLERANCE,
    _relative_error,
    check_suite,
    cross_entropy_loss,
    finite_diff_check,
    input_jacobian,
    run_check_suite,
    squared_loss,
    sum_loss,
)
from src.nn.layers import LayerSpec
from src.nn.network import build_mlp, build_network, forward


class TestLossSpecs:

    def test_squared_loss(self):
        value, grad = squared_loss(np.array([1.0, 2.0]))(np.array([2.0, 0.0]))
        assert value == 5.0
        np.testing.assert_array_equal(grad, [2.0, -4.0])

    def test_cross_entropy_loss(self):
        y = np.array([[0.25, 0.75], [0.5, 0.5]])
        value, grad = cross_entropy_loss(np.array([1, 0]))(y)
        assert value == pytest.approx(-(np.log(0.75) + np.log(0.5)) / 2)
        np.testing.assert_allclose(grad, [[0.0, -1 / 1.5], [-1.0, 0.0]])

    def test_sum_loss(self):
        value, grad = sum_loss()(np.ones((2, 3)))
        assert value == 6.0
        assert grad.shape == (2, 3)


class TestRelativeError:

    def test_small_gradients_use_their_own_scale(self):
        assert _relative_error(2e-7, 1e-7) == pytest.approx(0.5)
        assert _relative_error(-1e-7, 1e-7) == pytest.approx(2.0)

    def test_floor_below_both_magnitudes(self):
        assert GRAD_FLOOR == 1e-8
        assert _relative_error(5e-9, 0.0) == pytest.approx(0.5)

    def test_exact_zero(self):
        assert _relative_error(0.0, 0.0) == 0.0

    def test_large_gradients(self):
        assert _relative_error(2.0, 2.0 + 2e-6) == pytest.approx(1e-6, rel=1e-5)


class TestFiniteDiffCheck:

    def test_every_suite_case_passes(self):
        errors = run_check_suite(seed=0)
        assert set(errors) == {name for name, *_ in check_suite(0)}
        for name, err in errors.items():
            assert err < GRADCHECK_TOLERANCE, name

    def test_params_restored(self, tiny_mlp, rng):
        before = tiny_mlp.params.copy()
        x = rng.standard_normal((2, 2))
        finite_diff_check(tiny_mlp, x, cross_entropy_loss(np.array([0, 1])))
        np.testing.assert_array_equal(tiny_mlp.params, before)

    def test_detects_wrong_gradient(self, tiny_mlp, rng):
        def bad_loss(y):
            value, grad = squared_loss(np.zeros_like(y))(y)
            return value, 3.0 * grad
        err = finite_diff_check(tiny_mlp, rng.standard_normal((2, 2)), bad_loss)
        assert err > 0.5

    def test_requires_f64(self, rng):
        net = build_mlp([2, 4, 2], seed=0, dtype=np.dtype(np.float32))
        with pytest.raises(ConfigError) as exc:
            finite_diff_check(net, rng.standard_normal((1, 2)).astype(np.float32), sum_loss())
        assert exc.value.key == "precision"


class TestInputJacobian:

    def test_linear_network(self, rng):
        net = build_network([LayerSpec("dense", (3, 2))], (3,), seed=0)
        jac = input_jacobian(net, rng.standard_normal((1, 3)))
        np.testing.assert_allclose(jac, net.params[:6].reshape(3, 2).T)

    def test_matches_finite_differences(self, tiny_mlp, rng):
        x = rng.standard_normal((1, 2))
        jac = input_jacobian(tiny_mlp, x)
        h = 1e-6
        for j in range(2):
            e = np.zeros_like(x)
            e[0, j] = h
            col = (forward(tiny_mlp, x + e)[0] - forward(tiny_mlp, x - e)[0]).ravel() / (2 * h)
            np.testing.assert_allclose(jac[:, j], col, atol=1e-7)

    def test_perturbation_energy_tracks_jacobian_norm(self, rng):
        # E‖f(x + εn) − f(x)‖² ≈ ε²‖J‖²_F for small ε and n ~ N(0, I); linear output head
        net = build_mlp([2, 16, 16, 2], seed=0, softmax=False)
        assert net.specs[-1].kind == "dense"
        eps, draws = 1e-3, 10_000
        x = rng.standard_normal((1, 2))
        jac = input_jacobian(net, x)
        clean, _ = forward(net, x)
        noisy, _ = forward(net, x + eps * rng.standard_normal((draws, 2)))
        energy = ((noisy - clean) ** 2).sum(axis=1).mean()
        assert energy == pytest.approx(eps ** 2 * (jac ** 2).sum(), rel=0.05)
