"""Test the autodiff engine"""
import unittest

import numpy as np

from metaquant.core.exceptions import GraphError, NonFiniteError, ShapeError
from metaquant.lib.autodiff import Tape, constant, detach, get_dtype, leaf, precision, rebase_leaf
from metaquant.lib.autodiff import functional as F
from metaquant.lib.checks import check_function, check_ops


class TestRecord(unittest.TestCase):
    """Forward values and shape contracts"""

    def test_scalar_mul(self):
        """mul of 2 and 3 is 6"""
        with Tape():
            node = F.mul(leaf(2.0), leaf(3.0))
        self.assertEqual(float(node.value), 6.0)

    def test_matmul_shape(self):
        """2x3 @ 3x1 -> 2x1"""
        with Tape():
            node = F.matmul(leaf(np.ones((2, 3))), leaf(np.ones((3, 1))))
        self.assertEqual(node.shape, (2, 1))

    def test_concat_last_axis(self):
        """Two N x 1 columns concatenate to N x 2"""
        with Tape():
            node = F.concat([leaf(np.zeros((5, 1))), leaf(np.ones((5, 1)))])
        self.assertEqual(node.shape, (5, 2))
        self.assertTrue(np.all(node.value[:, 1] == 1))

    def test_shape_mismatch(self):
        """A shape mismatch names the op and both shapes"""
        with Tape():
            with self.assertRaises(ShapeError) as ctx:
                F.matmul(leaf(np.ones((2, 3))), leaf(np.ones((2, 3))))
        self.assertIn("matmul", str(ctx.exception))
        self.assertIn("(2, 3) and (2, 3)", str(ctx.exception))

    def test_no_active_tape(self):
        """Recording outside a tape is an error"""
        self.assertRaises(GraphError, F.add, leaf(1.0), leaf(2.0))

    def test_topological_order(self):
        """Every recorded node comes after its parents"""
        with Tape() as tape:
            x = leaf(np.ones((2, 2)))
            F.tanh(F.add(F.mul(x, x), x))
        position = dict((id(node), idx) for idx, node in enumerate(tape.nodes))
        for node in tape.nodes:
            for parent in node.parents:
                if id(parent) in position:
                    self.assertLess(position[id(parent)], position[id(node)])


class TestBackward(unittest.TestCase):
    """Gradients"""

    def test_product_rule(self):
        """d(xy)/dx = y and d(xy)/dy = x"""
        with Tape() as tape:
            x, y = leaf(2.0), leaf(3.0)
            grads = tape.backward(F.mul(x, y))
        self.assertEqual(float(grads[x]), 3.0)
        self.assertEqual(float(grads[y]), 2.0)

    def test_dead_relu(self):
        """relu(-1.5 x) at x = 1 has zero gradient"""
        with Tape() as tape:
            x = leaf(1.0)
            grads = tape.backward(F.relu(F.scale(x, -1.5)))
        self.assertEqual(float(grads[x]), 0.0)

    def test_detach(self):
        """Only the attached factor of detach(x) * x contributes"""
        with Tape() as tape:
            x = leaf(2.0)
            grads = tape.backward(F.mul(detach(x), x))
        self.assertEqual(float(grads[x]), 2.0)

    def test_detach_blocks_ancestors(self):
        """Nothing flows past a detached node"""
        with Tape() as tape:
            x = leaf(np.ones(3))
            loss = F.sum(F.mul(detach(F.tanh(x)), constant(np.ones(3))))
            grads = tape.backward(loss)
        self.assertNotIn(x, grads)

    def test_nonscalar_loss(self):
        """backward needs a scalar"""
        with Tape() as tape:
            x = leaf(np.ones(3))
            self.assertRaises(GraphError, tape.backward, F.tanh(x))

    def test_mlp_finite_differences(self):
        """A random 3-layer FP64 MLP matches central differences"""
        rng = np.random.RandomState(7)
        labels = np.array([0, 1, 2, 1])

        def mlp(x, w0, w1, w2):
            hidden = F.tanh(F.matmul(x, w0))
            hidden = F.sigmoid(F.matmul(hidden, w1))
            return F.softmax_cross_entropy(F.matmul(hidden, w2), labels)

        arrays = [
            rng.normal(size=(4, 3)),
            rng.normal(size=(3, 5)),
            rng.normal(size=(5, 4)),
            rng.normal(size=(4, 3)),
        ]
        result = check_function("mlp", mlp, arrays, tolerance=1e-6)
        self.assertTrue(result.passed, result.details)

    def test_every_op(self):
        """Every op-kind agrees with finite differences in FP64"""
        for result in check_ops(seed=0, tolerance=1e-6):
            self.assertTrue(result.passed, "%s: %r" % (result.name, result.details))


class TestRetention(unittest.TestCase):
    """Retained fragments survive a backward pass"""

    def test_retained_fragment(self):
        """A second backward through a retained fragment gives the full gradient"""
        weight = np.array([1.0, -2.0, 0.5])
        with precision("fp64"):
            with Tape() as tape:
                psi = leaf(1.5)
                fragment = tape.mark(F.mul(psi, constant(weight)), "step:0")
                first = F.sum(F.mul(fragment, constant(np.ones(3))))
                tape.backward(first, retain=("step:0",))
                self.assertEqual(fragment.op.value, "mul")
                self.assertTrue(fragment.parents)
                second = F.sum(F.mul(fragment, fragment))
                grads = tape.backward(second)
        self.assertAlmostEqual(float(grads[psi]), 2 * 1.5 * float(np.sum(weight ** 2)))

    def test_freed_fragment(self):
        """Without retention the second backward is an error"""
        with Tape() as tape:
            psi = leaf(1.5)
            fragment = F.mul(psi, constant(np.ones(3)))
            tape.backward(F.sum(fragment))
            self.assertRaises(GraphError, tape.backward, F.sum(F.mul(fragment, fragment)))

    def test_rebase_leaf(self):
        """rebase_leaf copies the value and drops the history"""
        with Tape() as tape:
            psi = leaf(2.0)
            fragment = F.scale(F.mul(psi, constant(np.arange(3.0))), 0.5)
            fresh = rebase_leaf(fragment)
            grads = tape.backward(F.sum(F.mul(fresh, fresh)))
        self.assertTrue(np.array_equal(fresh.value, fragment.value))
        self.assertFalse(fresh.parents)
        self.assertNotIn(psi, grads)
        self.assertIn(fresh, grads)


class TestPrecision(unittest.TestCase):
    """Working precision and debug checks"""

    def test_precision_context(self):
        """precision() switches the dtype and restores it"""
        saved = get_dtype()
        with precision("fp64"):
            self.assertEqual(leaf([1.0]).value.dtype, np.float64)
        self.assertEqual(get_dtype(), saved)

    def test_unknown_precision(self):
        """Only fp32 and fp64 exist"""
        with self.assertRaises(ValueError):
            with precision("fp16"):
                pass

    def test_debug_non_finite(self):
        """Debug mode rejects non-finite values"""
        with precision("fp64", debug=True):
            with Tape():
                with np.errstate(divide="ignore"):
                    self.assertRaises(NonFiniteError, F.div, leaf(1.0), leaf(0.0))


if __name__ == "__main__":
    unittest.main()
