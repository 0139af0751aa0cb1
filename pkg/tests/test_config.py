"""Test experiment configuration"""
import os
import shutil
import unittest
from tempfile import mkdtemp

from metaquant.commands.mk_config import experiment_template
from metaquant.core.config import ExperimentConfig, parse_config
from metaquant.core.config.experiment import (
    error_signal_config,
    model_spec,
    optimizer_config,
    parse_overrides,
    quant_config,
)
from metaquant.core.exceptions import ConfigError
from metaquant.lib.data.synthetic import synthetic_dataset

PLAIN = ["mode = plain"]


class TestExperimentConfig(unittest.TestCase):
    """Parsing, folding and validation"""

    tmpdir = None

    def setUp(self):
        self.__class__.tmpdir = mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.__class__.tmpdir)

    def write(self, name, lines):
        path = os.path.join(self.__class__.tmpdir, name)
        with open(path, "w") as fileobj:
            fileobj.write("\n".join(lines) + "\n")
        return path

    def test_dotted_keys(self):
        """quant.grad_bits = 4 lands in [quant]"""
        config = ExperimentConfig(PLAIN + ["quant.grad_bits = 4"])
        self.assertEqual(config["quant"]["grad_bits"], 4)
        self.assertEqual(config["quant"]["weight_bits"], 32)

    def test_sections_and_dashes(self):
        """ini sections work and dashes read as underscores"""
        config = ExperimentConfig(PLAIN + ["[schedule]", "batch-size = 7"])
        self.assertEqual(config["schedule"]["batch_size"], 7)
        config = ExperimentConfig(PLAIN, {"schedule.batch-size": "9"})
        self.assertEqual(config["schedule"]["batch_size"], 9)

    def test_grad_bits_range(self):
        """One-bit gradients are rejected"""
        self.assertRaises(ConfigError, ExperimentConfig, PLAIN + ["quant.grad_bits = 1"])
        self.assertRaises(ConfigError, ExperimentConfig, PLAIN + ["quant.grad_bits = 17"])

    def test_forward_bits(self):
        """Forward bit-widths are 1..16 or 32"""
        config = ExperimentConfig(PLAIN + ["quant.weight_bits = 1"])
        self.assertEqual(config["quant"]["weight_bits"], 1)
        self.assertRaises(ConfigError, ExperimentConfig, PLAIN + ["quant.act_bits = 24"])

    def test_unknown_key(self):
        """The error names the nearest valid key"""
        with self.assertRaises(ConfigError) as ctx:
            ExperimentConfig(PLAIN + ["quant.grad_bit = 4"])
        self.assertIn("unknown key 'quant.grad_bit'", str(ctx.exception))
        self.assertIn("did you mean 'quant.grad_bits'?", str(ctx.exception))

    def test_meta_needs_hypernet(self):
        """mode=meta without a hypernet section is an error"""
        self.assertRaises(ConfigError, ExperimentConfig, ["mode = meta"])
        config = ExperimentConfig(["mode = meta"], {"hypernet.design": "lstmfc"})
        self.assertEqual(config["hypernet"]["design"], "lstmfc")
        self.assertEqual(config["hypernet"]["hidden"], 11)

    def test_clip_policy(self):
        """Clip policies are validated and canonicalized"""
        config = ExperimentConfig(PLAIN + ["quant.clip = percentile(99.5)"])
        self.assertEqual(config["quant"]["clip"], "percentile(99.5)")
        self.assertRaises(ConfigError, ExperimentConfig, PLAIN + ["quant.clip = median"])

    def test_flag_over_file(self):
        """Command line flags beat file values"""
        path = self.write("exp.conf", PLAIN + ["quant.grad_bits = 4"])
        self.assertEqual(parse_config(path)["quant"]["grad_bits"], 4)
        config = parse_config(path, {"grad_bits": 8, "lr": None})
        self.assertEqual(config["quant"]["grad_bits"], 8)
        config = parse_config(path, overrides=["optimizer.lr=0.5"])
        self.assertEqual(config["optimizer"]["lr"], 0.5)

    def test_missing_file(self):
        """An unreadable config is a ConfigError"""
        missing = os.path.join(self.__class__.tmpdir, "missing.conf")
        self.assertRaises(ConfigError, parse_config, missing)

    def test_bad_override(self):
        """--set items need key=value"""
        self.assertEqual(parse_overrides(["a.b = 1"]), {"a.b": "1"})
        self.assertRaises(ConfigError, parse_overrides, ["quant.grad_bits"])

    def test_snapshot(self):
        """A snapshot reloads to the same values"""
        config = ExperimentConfig(["mode = meta", "quant.grad_bits = 3"], {"hypernet.hidden": "5"})
        path = config.snapshot(os.path.join(self.__class__.tmpdir, "snapshot.conf"))
        self.assertEqual(ExperimentConfig(path).dict(), config.dict())

    def test_builders(self):
        """Sections turn into engine objects"""
        config = ExperimentConfig(
            PLAIN + ["quant.grad_bits = 6", "optimizer.kind = adam", "quant.error_signal = yes"]
        )
        self.assertEqual(quant_config(config).bits, 6)
        self.assertFalse(quant_config(config).bypass)
        self.assertEqual(optimizer_config(config).kind, "adam")
        self.assertEqual(error_signal_config(config).bits, 6)
        spec = model_spec(config, synthetic_dataset("ring", 10, 0))
        self.assertEqual(spec.widths, [2, 64, 2])

    def test_builder_errors(self):
        """An unusable bit-width reaches the builders as a ConfigError"""
        config = ExperimentConfig(PLAIN + ["quant.error_signal = yes"])
        config["quant"]["grad_bits"] = 17
        self.assertRaises(ConfigError, quant_config, config)
        self.assertRaises(ConfigError, error_signal_config, config)


class TestShippedConfigs(unittest.TestCase):
    """Configs under conf/"""

    def test_experiments_validate(self):
        """Every example experiment validates"""
        directory = os.path.join(os.path.dirname(__file__), os.pardir, "conf", "experiments")
        names = sorted(name for name in os.listdir(directory) if name.endswith(".conf"))
        self.assertTrue(names)
        for name in names:
            config = ExperimentConfig(os.path.join(directory, name))
            self.assertEqual(config["mode"], "meta", name)


class TestTemplate(unittest.TestCase):
    """mk-config output"""

    def test_template_parses(self):
        """The generated template is a valid experiment config"""
        for minimal in (False, True):
            lines = experiment_template(skip_comments=minimal)
            config = ExperimentConfig(lines)
            self.assertEqual(config["mode"], "meta")
            self.assertEqual(config["hypernet"]["design"], "duallstmfc")
            self.assertIsNone(config["hypernet"]["fc_layers"])

    def test_template_comments(self):
        """Unset keys appear only as comments"""
        stripped = [line.strip() for line in experiment_template()]
        self.assertIn('# train_images = "" # no default', stripped)
        self.assertNotIn("train_images", [line.split("=")[0].strip() for line in stripped])
        for line in experiment_template(skip_comments=True):
            if line.strip().startswith("#"):
                self.assertIn("no default", line)


if __name__ == "__main__":
    unittest.main()
