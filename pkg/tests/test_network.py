"""Tests for the sparse ReQU network representation and its composition algebra."""

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from requnet.network import (
    Architecture,
    Network,
    WeightBoundError,
    audit,
    concat,
    forward,
    identity_network,
    linear,
    pad_depth,
    parallel,
    stack,
)


def random_net(rng, dims, density=0.5):
    """Sparse network with entries uniform in [-1, 1]."""
    ws = []
    for a, b in zip(dims, dims[1:]):
        w = rng.uniform(-1, 1, (b, a)) * (rng.random((b, a)) < density)
        ws.append(w)
    vs = [rng.uniform(-1, 1, n) * (rng.random(n) < density) for n in dims[1:-1]]
    return Network(ws, vs)


def dense_forward(net, x):
    """Reference evaluation with dense matrices and an explicit loop."""
    h = np.atleast_2d(x)
    for w, v in zip(net.weights[:-1], net.shifts):
        h = np.maximum(h @ w.toarray().T - v, 0) ** 2
    return h @ net.weights[-1].toarray().T


class TestArchitecture:
    def test_depth_and_width(self):
        a = Architecture((2, 4, 7, 1))
        assert a.hidden == 2 and a.width == 7

    def test_too_short(self):
        with pytest.raises(ValueError):
            Architecture((3,))


class TestNetwork:
    """Construction, bounds and accounting."""

    def test_weight_bound_enforced(self):
        with pytest.raises(WeightBoundError):
            Network([np.array([[1.5]])], [])
        with pytest.raises(WeightBoundError):
            Network([np.eye(1), np.eye(1)], [np.array([-1.01])])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            Network([np.ones((2, 3)), np.ones((1, 3))], [np.zeros(2)])
        with pytest.raises(ValueError):
            Network([np.ones((2, 3)), np.ones((1, 2))], [np.zeros(3)])

    def test_nonzero_count(self):
        net = Network([np.array([[0.5, 0.0], [0.0, -1.0]]), np.array([[1.0, 1.0]])], [np.array([0.0, 0.3])])
        assert net.nonzero_count() == 2 + 2 + 1

    def test_tiny_values_kept(self):
        net = linear(np.array([[1e-300]]))
        assert net.nonzero_count() == 1

    def test_json_roundtrip(self):
        rng = np.random.default_rng(0)
        net = random_net(rng, (3, 5, 4, 2))
        back = Network.from_json(net.to_json())
        x = rng.uniform(-1, 1, (50, 3))
        np.testing.assert_array_equal(back(x), net(x))
        assert back.arch == net.arch

    def test_json_schema(self):
        import json

        doc = json.loads(random_net(np.random.default_rng(1), (2, 3, 1)).to_json())
        assert doc["dims"] == [2, 3, 1]
        assert all(set(layer) >= {"w", "v"} for layer in doc["layers"])


class TestForward:
    def test_linear_only(self):
        w = np.array([[0.5, -0.25], [1.0, 0.0]])
        np.testing.assert_array_equal(forward(linear(w), [2.0, 4.0]), w @ [2.0, 4.0])

    def test_shifted_requ(self):
        net = Network([np.array([[1.0]]), np.array([[1.0]])], [np.array([0.5])])
        np.testing.assert_allclose(net(np.array([[0.2], [0.9]]))[:, 0], [0.0, 0.16])

    def test_identity_block(self):
        assert identity_network(1)(np.array([0.37]))[0] == pytest.approx(0.37, abs=1e-15)

    @given(st.integers(0, 2**31))
    @settings(max_examples=50, deadline=None)
    def test_matches_dense_reference(self, seed):
        rng = np.random.default_rng(seed)
        dims = tuple(rng.integers(1, 6, rng.integers(2, 6)))
        net = random_net(rng, dims)
        x = rng.uniform(-1, 1, (20, dims[0]))
        np.testing.assert_allclose(net(x), dense_forward(net, x), rtol=1e-13, atol=1e-14)

    def test_input_mismatch(self):
        with pytest.raises(ValueError):
            forward(identity_network(2), np.zeros(3))


class TestConcat:
    def test_identity_then_net(self):
        rng = np.random.default_rng(2)
        net = random_net(rng, (3, 4, 2))
        x = rng.uniform(-1, 1, (100, 3))
        np.testing.assert_allclose(concat(identity_network(3), net, "merge")(x), net(x), atol=1e-14)

    @pytest.mark.parametrize("splice,extra", [("merge", 0), ("identity", 1)])
    def test_depth_count(self, splice, extra):
        rng = np.random.default_rng(3)
        g, h = random_net(rng, (2, 3, 3, 4)), random_net(rng, (4, 5, 1))
        assert concat(g, h, splice).hidden == g.hidden + h.hidden + extra

    def test_auto_falls_back_on_large_product(self):
        g = Network([np.ones((2, 1)), np.ones((2, 2))], [np.zeros(2)])
        h = Network([np.ones((1, 2)), np.ones((1, 1))], [np.zeros(1)])
        out = concat(g, h, "auto")
        assert out.hidden == 3 and out.max_abs_weight() <= 1

    def test_composition_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            g = random_net(rng, (2, 3, 2), density=0.7)
            h = random_net(rng, (2, 2, 1), density=0.7)
            x = rng.uniform(-1, 1, (1, 2))
            ref = h(g(x))
            for mode in ("auto", "identity"):
                np.testing.assert_allclose(concat(g, h, mode)(x), ref, rtol=1e-12, atol=1e-14)

    def test_width_mismatch(self):
        with pytest.raises(ValueError):
            concat(identity_network(2), identity_network(3))

    def test_merge_densifies_at_most_product(self):
        rng = np.random.default_rng(5)
        g, h = random_net(rng, (2, 3, 4)), random_net(rng, (4, 3, 1))
        merged = concat(g, h, "identity")
        assert merged.max_abs_weight() <= 1


class TestParallel:
    def test_duplicate(self):
        rng = np.random.default_rng(6)
        net = random_net(rng, (2, 4, 3))
        x = rng.uniform(-1, 1, (10, 2))
        np.testing.assert_array_equal(parallel(net, net)(x), np.hstack([net(x), net(x)]))

    def test_nonzero_additive(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            f, g = random_net(rng, (3, 4, 2)), random_net(rng, (3, 2, 5))
            assert parallel(f, g).nonzero_count() == f.nonzero_count() + g.nonzero_count()

    def test_independent_runs(self):
        rng = np.random.default_rng(8)
        f, g = random_net(rng, (3, 4, 4, 2)), random_net(rng, (3, 5, 2, 1))
        x = rng.uniform(-1, 1, (1000, 3))
        np.testing.assert_allclose(parallel(f, g)(x), np.hstack([f(x), g(x)]), rtol=0, atol=1e-15)

    def test_doubles_width(self):
        net = identity_network(2)
        assert parallel(net, net).arch.dims[1] == 2 * net.arch.dims[1]

    def test_mismatch(self):
        rng = np.random.default_rng(9)
        with pytest.raises(ValueError):
            parallel(random_net(rng, (2, 3, 1)), random_net(rng, (2, 3, 3, 1)))
        with pytest.raises(ValueError):
            parallel(random_net(rng, (2, 3, 1)), random_net(rng, (3, 3, 1)))


class TestStack:
    def test_disjoint_inputs(self):
        rng = np.random.default_rng(10)
        f, g = random_net(rng, (2, 3, 1)), random_net(rng, (3, 2, 2))
        x = rng.uniform(-1, 1, (20, 5))
        np.testing.assert_allclose(stack(f, g)(x), np.hstack([f(x[:, :2]), g(x[:, 2:])]), atol=1e-15)


class TestPadDepth:
    def test_zero_padding(self):
        net = random_net(np.random.default_rng(11), (2, 3, 1))
        assert pad_depth(net, net.hidden) is net

    def test_identity_padded(self):
        net = pad_depth(identity_network(1), 3)
        x = np.linspace(-1, 1, 101)[:, None]
        assert net.hidden == 3
        np.testing.assert_allclose(net(x), x, atol=1e-14)

    def test_nonzero_growth(self):
        rng = np.random.default_rng(12)
        net = random_net(rng, (2, 3, 2))
        padded = pad_depth(net, 3)
        # first block: last matrix copied 4x with signs, plus 4 shifts and 4 read-outs
        # per coordinate; each further block adds a dense 4x4 merge and 4 shifts
        growth = 3 * net.weights[-1].count_nonzero() + 8 * 2 + 20 * 2
        assert padded.nonzero_count() - net.nonzero_count() == growth
        x = rng.uniform(-0.5, 0.5, (30, 2))
        np.testing.assert_allclose(padded(x), net(x), atol=1e-13)

    def test_rejects_shrink(self):
        with pytest.raises(ValueError):
            pad_depth(identity_network(1), 0)


class TestAudit:
    def test_fields(self):
        a = audit(identity_network(2))
        assert a == {"depth": 1, "width": 8, "dims": [2, 8, 2], "nonzero": 24, "max_abs_weight": 1.0}

    def test_sparse_input_accepted(self):
        net = linear(sp.eye(3, format="coo"))
        assert net.nonzero_count() == 3
