"""Test the hypernetwork designs"""
import unittest

import numpy as np

from metaquant.core.exceptions import ShapeError
from metaquant.core.plugin import PluginLoadError
from metaquant.hypernet import (
    RecurrentState,
    flatten_for_hypernet,
    hypernet_apply,
    init_hypernet,
    unflatten,
)
from metaquant.lib.autodiff import Tape, constant, precision
from metaquant.lib.autodiff import functional as F
from metaquant.lib.quant import QuantConfig, fake_quantize_array, max_code

BYPASS = QuantConfig(8, bypass=True)


def random_pair(size, seed=0):
    rng = np.random.RandomState(seed)
    return flatten_for_hypernet(rng.normal(size=size), rng.normal(size=size))


def make_identity(params):
    """Zero the last FC layer and set its bias to 1 so FCs(.) == 1"""
    last = params.design.fc_layers - 1
    weight = "fc%d.weight" % last
    params.assign(weight, np.zeros_like(params[weight].value))
    params.assign("fc%d.bias" % last, [1.0])
    return params


class TestFlatten(unittest.TestCase):
    """Coordinate-wise flattening"""

    def test_shapes(self):
        """N x 1 columns of nck^2 elements"""
        pair = flatten_for_hypernet(np.ones((2, 3)), np.ones((2, 3)))
        self.assertEqual(pair.size, 6)
        self.assertEqual(pair.grad.shape, (6, 1))
        self.assertEqual(pair.weight.shape, (6, 1))
        self.assertEqual(random_pair((4, 3, 3, 3)).size, 108)

    def test_round_trip(self):
        """unflatten(flatten(x)) == x"""
        x = np.random.RandomState(1).normal(size=(4, 3, 3, 3))
        pair = flatten_for_hypernet(x, x)
        self.assertTrue(np.array_equal(unflatten(pair.grad.value, pair.shape), x))

    def test_mismatch(self):
        """Gradient and weight shapes must agree"""
        self.assertRaises(ShapeError, flatten_for_hypernet, np.ones((2, 3)), np.ones((3, 2)))


class TestDesigns(unittest.TestCase):
    """Calibration networks"""

    def test_multifc_linear_unit(self):
        """A single linear unit with scale 2 and bias 0.5"""
        with precision("fp64"):
            params = init_hypernet("multifc", 1, 0, fc_layers=1)
            params.assign("fc0.weight", [[2.0]])
            params.assign("fc0.bias", [0.5])
            pair = flatten_for_hypernet(np.array([0.1, 0.2]), np.array([1.0, -1.0]))
            with Tape():
                out = hypernet_apply(pair, params, BYPASS)
        np.testing.assert_allclose(out.value[:, 0], [0.25, -0.3], rtol=1e-12)

    def test_lstmfc_zero_cell(self):
        """Zero recurrent and FC weights with final bias 1 reproduce the gradient"""
        with precision("fp64"):
            params = init_hypernet("lstmfc", 3, 0)
            for name in ("lstm.weight", "lstm.bias", "fc0.weight", "fc0.bias"):
                params.assign(name, np.zeros_like(params[name].value))
            params.assign("fc0.bias", [1.0])
            pair = random_pair(10)
            state = RecurrentState()
            with Tape():
                out = hypernet_apply(pair, params, BYPASS, state)
        self.assertTrue(np.array_equal(out.value, pair.grad.value))
        self.assertEqual(state.hidden.shape, (10, 3))

    def test_duallstmfc_zero_params(self):
        """All-zero parameters output the final bias everywhere"""
        with precision("fp64"):
            params = init_hypernet("duallstmfc", 5, 0)
            for name in list(params.leaves):
                params.assign(name, np.zeros_like(params[name].value))
            params.assign("fc0.bias", [0.7])
            with Tape():
                out = hypernet_apply(random_pair(12), params, BYPASS)
        self.assertEqual(out.shape, (12, 1))
        np.testing.assert_allclose(out.value, 0.7, rtol=1e-12)

    def test_zero_gradient(self):
        """Only DualLSTMFC can answer a zero gradient with a nonzero output"""
        rng = np.random.RandomState(2)
        weight = rng.normal(size=20)
        with precision("fp64"):
            for design in ("multifc", "lstmfc"):
                params = init_hypernet(design, 4, 1)
                pair = flatten_for_hypernet(np.zeros(20), weight)
                with Tape():
                    out = hypernet_apply(pair, params, QuantConfig(4))
                self.assertTrue(np.all(out.value == 0), design)
            params = init_hypernet("duallstmfc", 4, 1)
            with Tape():
                out = hypernet_apply(flatten_for_hypernet(np.zeros(20), weight), params, BYPASS)
        self.assertTrue(np.any(out.value != 0))

    def test_unknown_design(self):
        """Unknown designs fail to load"""
        self.assertRaises(PluginLoadError, init_hypernet, "transformer", 4, 0)


class TestHypernetApply(unittest.TestCase):
    """Calibrate first, quantize last"""

    def test_identity_reduces_to_quantizer(self):
        """An identity calibration is the plain quantizer"""
        cfg = QuantConfig(4)
        with precision("fp64"):
            params = make_identity(init_hypernet("multifc", 4, 0))
            pair = random_pair(50, seed=3)
            with Tape():
                out = hypernet_apply(pair, params, cfg)
        expected, _ = fake_quantize_array(pair.grad.value, cfg)
        self.assertTrue(np.array_equal(out.value, expected))

    def test_codomain(self):
        """Outputs lie on the (c, B) grid for random parameters"""
        cfg = QuantConfig(3)
        with precision("fp64"):
            for design in ("multifc", "lstmfc", "duallstmfc"):
                params = init_hypernet(design, 6, 4)
                with Tape():
                    out = hypernet_apply(random_pair(40, seed=5), params, cfg)
                    clip = out.fn.attrs["clip"].value
                scaled = out.value * max_code(3) / clip
                np.testing.assert_allclose(scaled, np.round(scaled), atol=1e-9)
                self.assertTrue(np.all(np.abs(np.round(scaled)) <= max_code(3)))

    def test_high_bit_error_bound(self):
        """At 16 bits an identity calibration stays within c / 2L of the gradient"""
        with precision("fp64"):
            params = make_identity(init_hypernet("multifc", 4, 0))
            pair = random_pair(200, seed=6)
            with Tape():
                out = hypernet_apply(pair, params, QuantConfig(16))
        grad = pair.grad.value
        bound = np.abs(grad).max() / (2 * max_code(16))
        self.assertTrue(np.all(np.abs(out.value - grad) <= bound * (1 + 1e-9)))

    def test_multifc_near_identity_init(self):
        """MultiFC starts close to the identity"""
        with precision("fp64"):
            params = init_hypernet("multifc", 4, 0)
            pair = random_pair(500, seed=7)
            with Tape():
                out = hypernet_apply(pair, params, BYPASS)
        grad = pair.grad.value
        self.assertLessEqual(np.linalg.norm(out.value - grad) / np.linalg.norm(grad), 0.05)

    def test_input_scale_and_residual(self):
        """max-abs input scaling is undone; residual adds the gradient"""
        with precision("fp64"):
            plain = init_hypernet("multifc", 4, 0)
            scaled = init_hypernet("multifc", 4, 0, input_scale="max-abs")
            residual = init_hypernet("multifc", 4, 0, residual=True)
            pair = random_pair(30, seed=8)
            with Tape():
                base = hypernet_apply(pair, plain, BYPASS).value
                np.testing.assert_allclose(
                    hypernet_apply(pair, scaled, BYPASS).value, base, rtol=1e-12
                )
                np.testing.assert_allclose(
                    hypernet_apply(pair, residual, BYPASS).value,
                    base + pair.grad.value,
                    rtol=1e-12,
                )


class TestParams(unittest.TestCase):
    """One parameter set for every layer"""

    def test_parameter_count(self):
        """DualLSTMFC with H = 11 has 4 (2 + 11 + 1) 11 + 12 parameters"""
        self.assertEqual(init_hypernet("duallstmfc", 11, 0).count(), 628)

    def test_deterministic_init(self):
        """The same seed gives the same parameters"""
        first = init_hypernet("lstmfc", 5, 3).values()
        second = init_hypernet("lstmfc", 5, 3).values()
        for name in first:
            self.assertTrue(np.array_equal(first[name], second[name]))

    def test_layer_additivity(self):
        """Two identical layers double the parameter gradient"""
        pair_args = (np.random.RandomState(9).normal(size=8), np.arange(8.0) / 8)
        upstream_value = np.random.RandomState(10).normal(size=(8, 1))

        def grads(layers):
            upstream = constant(upstream_value)
            with Tape() as tape:
                outputs = [
                    hypernet_apply(flatten_for_hypernet(*pair_args), params, BYPASS)
                    for _ in range(layers)
                ]
                loss = F.sum(F.mul(outputs[0], upstream))
                for out in outputs[1:]:
                    loss = F.add(loss, F.sum(F.mul(out, upstream)))
                results = tape.backward(loss)
            return dict((name, results[node]) for name, node in params.leaves.items())

        with precision("fp64"):
            params = init_hypernet("multifc", 3, 0)
            single = grads(1)
            double = grads(2)
        for name in single:
            np.testing.assert_allclose(double[name], 2 * single[name], rtol=1e-12, atol=1e-15)

    def test_recurrent_state_resolve(self):
        """Stale or empty state resolves to zeros"""
        state = RecurrentState()
        hidden, cell = state.resolve(4, 3, np.float64)
        self.assertEqual(hidden.shape, (4, 3))
        self.assertFalse(np.any(cell))
        state.hidden = np.ones((2, 3))
        state.cell = np.ones((2, 3))
        hidden, _ = state.resolve(4, 3, np.float64)
        self.assertFalse(np.any(hidden))


if __name__ == "__main__":
    unittest.main()
