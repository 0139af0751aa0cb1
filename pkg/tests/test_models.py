"""Test the model zoo"""
import unittest

import numpy as np

from metaquant.core.exceptions import ConfigError
from metaquant.core.train.meta import TrainState, training_step
from metaquant.core.train.optim import OptimizerConfig
from metaquant.lib.autodiff import Tape
from metaquant.lib.data.synthetic import synthetic_dataset
from metaquant.lib.models import ModelSpec, build_model


def small_resnet(**kwargs):
    spec = ModelSpec("mini-resnet", 10, (3, 8, 8), stage_widths=(4, 8, 16), **kwargs)
    return build_model(spec, 0)


class TestModelSpec(unittest.TestCase):
    """ModelSpec validation"""

    def test_unknown_arch(self):
        """Only the three architectures are known"""
        self.assertRaises(ConfigError, ModelSpec, "vgg", 10, (3, 32, 32))

    def test_mlp_widths(self):
        """mlp widths must match the input and the classes"""
        self.assertRaises(ConfigError, ModelSpec, "mlp", 2, (2,), widths=[3, 2])
        self.assertRaises(ConfigError, ModelSpec, "mlp", 2, (2,), widths=[2, 3])
        self.assertRaises(ConfigError, ModelSpec, "mlp", 2, (2,), widths=[2])

    def test_image_shapes(self):
        """Image models need divisible (C, H, W) inputs"""
        self.assertRaises(ConfigError, ModelSpec, "small-cnn", 10, (3, 30, 30))
        self.assertRaises(ConfigError, ModelSpec, "mini-resnet", 10, (32, 32))


class TestBuildModel(unittest.TestCase):
    """Layer layout and forward shapes"""

    def test_mlp_layers(self):
        """One quantizable layer per mlp transition"""
        model = build_model(ModelSpec("mlp", 2, (2,), widths=[2, 8, 2]), 0)
        self.assertEqual([layer.name for layer in model.quantizable], ["fc0", "fc1"])
        self.assertEqual(model.quantizable[0].weight.shape, (2, 8))

    def test_resnet_layers(self):
        """ResNet-20 layout: stem conv, 18 block convs, one FC"""
        model = small_resnet()
        self.assertEqual(len(model.quantizable), 20)
        self.assertEqual(model.quantizable[0].name, "conv0")
        self.assertEqual(model.quantizable[-1].name, "fc")

    def test_output_shapes(self):
        """Logits are (batch, classes) for every architecture"""
        images = np.random.RandomState(0).normal(size=(3, 3, 8, 8))
        cnn = build_model(ModelSpec("small-cnn", 10, (3, 8, 8), channels=(4, 8), fc_width=16), 0)
        for model in (cnn, small_resnet()):
            self.assertEqual(model.predict(images).shape, (3, 10))
        mlp = build_model(ModelSpec("mlp", 2, (2,), widths=[2, 4, 2]), 0)
        self.assertEqual(mlp.predict(np.zeros((5, 2))).shape, (5, 2))
        self.assertEqual(mlp.predict(np.zeros((0, 2))).shape, (0, 2))

    def test_skip_first_last(self):
        """First and last layers keep full-precision weights"""
        model = small_resnet(weight_bits=4)
        bits = [layer.weight_bits for layer in model.quantizable]
        self.assertEqual(bits[0], 32)
        self.assertEqual(bits[-1], 32)
        self.assertEqual(set(bits[1:-1]), set([4]))
        model = small_resnet(weight_bits=4, skip_first_last=False)
        self.assertEqual(set(layer.weight_bits for layer in model.quantizable), set([4]))

    def test_zero_branches_are_identity(self):
        """Blocks whose last conv is zero reduce to the shortcut path"""
        model = small_resnet()
        for block in model.blocks:
            block.conv2.weight.value = np.zeros_like(block.conv2.weight.value)
        images = np.random.RandomState(1).normal(size=(2, 3, 8, 8))
        with Tape():
            full = model.forward(images).value
            shortcut = model.forward(images, residual_branches=False).value
        self.assertTrue(np.array_equal(full, shortcut))

    def test_deterministic(self):
        """Same seed, same weights; state_dict round trips"""
        spec = ModelSpec("small-cnn", 10, (3, 8, 8), channels=(4, 8), fc_width=16)
        first, second = build_model(spec, 7).state_dict(), build_model(spec, 7).state_dict()
        self.assertEqual(list(first), list(second))
        for name in first:
            self.assertTrue(np.array_equal(first[name], second[name]), name)
        other = build_model(spec, 8)
        other.load_state(first)
        for name, value in other.state_dict().items():
            self.assertTrue(np.array_equal(value, first[name]), name)


class TestTraining(unittest.TestCase):
    """Full-precision sanity"""

    def test_mlp_learns_two_gaussians(self):
        """fp MLP reaches 95% training accuracy"""
        data = synthetic_dataset("two-gaussians", 200, 0)
        model = build_model(ModelSpec("mlp", 2, (2,), widths=[2, 16, 2]), 0)
        state = TrainState(model, "fp", OptimizerConfig("momentum", lr=0.05))
        for _ in range(500):
            training_step(state, data.images, data.labels)
        accuracy = np.mean(np.argmax(model.predict(data.images), axis=1) == data.labels)
        self.assertGreaterEqual(accuracy, 0.95)


if __name__ == "__main__":
    unittest.main()
