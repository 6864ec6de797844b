"""Tests for network Jacobians, finite differences and Hölder-norm estimates."""

import json

import numpy as np
import pytest
import scipy.sparse as sp

from requnet import targets
from requnet.compiler import CompileSpec, compile_function
from requnet.evaluator import (
    HolderEstimate,
    fd_deriv,
    forward_jet,
    forward_jet_batch,
    holder_norm_estimate,
    multi_indices,
)
from requnet.gadgets import identity_gadget, product2
from requnet.network import Network
from requnet.quasi_interpolant import eval_spline_deriv


def off_knot_points(rng, n, d, K):
    """Random points at distance >= 1/(4K) from every knot hyperplane."""
    cells = rng.integers(0, K, (n, d))
    return (cells + rng.uniform(0.25, 0.75, (n, d))) / K


@pytest.fixture(scope="module")
def model2d():
    return compile_function(targets.sin_x1sq_x2(), CompileSpec.for_degree(3, 4, d=2))


class TestForwardJet:
    def test_identity(self):
        jet = forward_jet(identity_gadget(3).net, [0.2, 0.5, 0.9])
        np.testing.assert_allclose(jet.jacobian, np.eye(3), atol=1e-14)
        np.testing.assert_allclose(jet.value, [0.2, 0.5, 0.9], atol=1e-15)

    def test_product_rule(self):
        jet = forward_jet(product2().net, [0.3, 0.8])
        np.testing.assert_allclose(jet.jacobian, [[0.8, 0.3]], atol=1e-15)

    def test_matches_spline_derivative(self, model2d):
        x = off_knot_points(np.random.default_rng(0), 200, 2, 4)
        _, jac = forward_jet_batch(model2d.net, x)
        for i, gamma in enumerate([(1, 0), (0, 1)]):
            ref = eval_spline_deriv(model2d.coeffs, x, gamma)[:, 0]
            scale = np.maximum(np.abs(ref), 1.0)
            assert np.max(np.abs(jac[:, 0, i] - ref) / scale) <= 1e-8

    def test_agrees_with_fd(self, model2d):
        rng = np.random.default_rng(1)
        x = off_knot_points(rng, 100, 2, 4)
        _, jac = forward_jet_batch(model2d.net, x)
        for k in range(len(x)):
            for i, gamma in enumerate([(1, 0), (0, 1)]):
                fd = fd_deriv(model2d.net, x[k], gamma, h=1e-4)
                assert jac[k, 0, i] == pytest.approx(fd, rel=1e-5, abs=1e-7)

    def test_linear_in_last_layer(self):
        rng = np.random.default_rng(2)
        ws = [rng.uniform(-1, 1, (4, 2)), rng.uniform(-1, 1, (3, 4)), rng.uniform(-1, 1, (2, 3))]
        vs = [rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 3)]
        base = Network(ws, vs)
        x = rng.uniform(0, 1, (20, 2))
        ref = forward_jet_batch(base, x)[1]
        for c in (-0.5, 0.25):
            # powers of two scale without rounding
            scaled = Network(ws[:-1] + [c * ws[-1]], vs)
            np.testing.assert_array_equal(forward_jet_batch(scaled, x)[1], c * ref)
        scaled = Network(ws[:-1] + [-0.375 * ws[-1]], vs)
        np.testing.assert_allclose(forward_jet_batch(scaled, x)[1], -0.375 * ref, rtol=1e-15, atol=1e-17)

    def test_right_derivative_at_kink(self):
        # sigma(x - 0.5): at the kink both one-sided slopes are 0
        net = Network([sp.csr_matrix([[1.0]]), sp.csr_matrix([[1.0]])], [np.array([0.5])])
        assert forward_jet(net, [0.5]).jacobian[0, 0] == 0.0

    def test_rejects_outside_cube(self):
        with pytest.raises(ValueError):
            forward_jet(product2().net, [1.2, 0.0])


class TestFdDeriv:
    def test_second_derivative_of_square(self):
        fn = lambda x: x[:, 0] ** 2
        for t in (0.1, 0.5, 0.9):
            assert fd_deriv(fn, [t], (2,)) == pytest.approx(2.0, abs=1e-6)

    @pytest.mark.parametrize("gamma", [(1, 0), (0, 2), (1, 1), (2, 1)])
    def test_constant(self, gamma):
        assert abs(fd_deriv(lambda x: np.full(len(x), 3.0), [0.4, 0.6], gamma)) <= 1e-9

    def test_mixed_against_spline(self, model2d):
        x = off_knot_points(np.random.default_rng(3), 20, 2, 4)
        for pt in x:
            ref = eval_spline_deriv(model2d.coeffs, pt[None], (1, 1))[0, 0]
            got = fd_deriv(model2d.net, pt, (1, 1), h=1.0 / 256)
            assert got == pytest.approx(ref, rel=1e-4, abs=1e-6)

    def test_vector_valued(self):
        fn = lambda x: np.stack([x[:, 0] ** 3, np.sin(x[:, 0])], axis=1)
        got = fd_deriv(fn, [0.5], (1,))
        np.testing.assert_allclose(got, [0.75, np.cos(0.5)], rtol=1e-8)

    def test_boundary_rejected(self):
        with pytest.raises(ValueError):
            fd_deriv(lambda x: x[:, 0], [0.001], (1,), h=1e-3)

    def test_bad_step(self):
        with pytest.raises(ValueError):
            fd_deriv(lambda x: x[:, 0], [0.5], (1,), h=0.0)


class TestMultiIndices:
    def test_counts(self):
        assert multi_indices(2, 2) == [(2, 0), (1, 1), (0, 2)]
        assert len(multi_indices(3, 2)) == 6
        assert multi_indices(1, 0) == [(0,)]


class TestHolderEstimate:
    def test_zero(self):
        est = holder_norm_estimate(lambda x: np.zeros(len(x)), 1, d=2)
        assert all(v == 0 for v in est.sups.values()) and est.holder_constant_estimate == 0

    def test_identity_map(self):
        est = holder_norm_estimate(lambda x: x[:, 0], 1)
        assert est.sups[(0,)] == pytest.approx(1.0)
        assert est.sups[(1,)] == pytest.approx(1.0, abs=1e-6)
        assert est.holder_constant_estimate == pytest.approx(0.0, abs=1e-6)

    def test_lipschitz_quotient(self):
        est = holder_norm_estimate(lambda x: x[:, 0] ** 2, 0, pair_samples=300)
        assert 0.5 < est.holder_constant_estimate <= 2.0

    def test_prefix_property(self):
        fn = lambda x: np.sin(3 * x[:, 0]) * x[:, 1]
        lo = holder_norm_estimate(fn, 1, d=2, grid_n=9)
        hi = holder_norm_estimate(fn, 2, d=2, grid_n=9)
        for g, v in lo.sups.items():
            assert hi.sups[g] == v

    def test_deterministic(self):
        fn = lambda x: np.cos(x[:, 0])
        a = holder_norm_estimate(fn, 1, seed=5)
        b = holder_norm_estimate(fn, 1, seed=5)
        assert a == b

    def test_nonnegative_and_json(self):
        est = holder_norm_estimate(lambda x: -np.exp(x[:, 0]), 2)
        assert all(v >= 0 for v in est.sups.values())
        doc = json.loads(est.to_json())
        assert [s["gamma"] for s in doc["sups"]] == [[0], [1], [2]]
        assert est.c_norm() == max(est.sups.values())

    def test_rejects_order(self):
        with pytest.raises(ValueError):
            holder_norm_estimate(lambda x: x[:, 0], 5)

    def test_dataclass_defaults(self):
        assert HolderEstimate(0).c_norm() == 0.0
