"""Test the experiment runner, run spool and command line"""
import csv
import os
import shutil
import unittest
from tempfile import mkdtemp

import numpy as np

from metaquant.commands.ablation import summarize, variants, write_summary
from metaquant.commands.list_plugins import design_param_count, format_table
from metaquant.core.cmdshell import main
from metaquant.core.config import ExperimentConfig
from metaquant.core.exceptions import ConfigError, TrainingAbort
from metaquant.core.plugin import load_hypernet_design
from metaquant.core.spool import RunEntry, Spool
from metaquant.core.train.runner import (
    MetricsRecord,
    eval_accuracy,
    load_run,
    run_experiment,
)
from metaquant.core.util.lock import LockError
from metaquant.lib.data import Dataset
from metaquant.lib.models import ModelSpec, build_model

SMALL = [
    "mode = plain",
    "model.widths = 8",
    "data.train_size = 64",
    "data.test_size = 32",
    "schedule.batch_size = 16",
    "schedule.eval_every = 2",
    "quant.grad_bits = 4",
]

META = [
    "mode = meta",
    "model.widths = 8",
    "data.train_size = 32",
    "data.test_size = 16",
    "schedule.batch_size = 16",
    "hypernet.design = multifc",
    "hypernet.hidden = 4",
]


class HarnessTestCase(unittest.TestCase):
    tmpdir = None

    def setUp(self):
        self.__class__.tmpdir = mkdtemp()
        self.spool = Spool(os.path.join(self.__class__.tmpdir, "runs"))

    def tearDown(self):
        shutil.rmtree(self.__class__.tmpdir)

    def path(self, *names):
        return os.path.join(self.__class__.tmpdir, *names)

    def config(self, lines, name, **overrides):
        overrides["output.directory"] = self.path(name)
        return ExperimentConfig(lines, overrides)


class TestRunExperiment(HarnessTestCase):
    """End to end runs into a run directory"""

    def test_metrics_csv(self):
        """Header plus one row per evaluation"""
        record, run = run_experiment(self.config(SMALL, "plain"), self.spool)
        with open(run.metrics_path) as fileobj:
            rows = list(csv.reader(fileobj))
        self.assertEqual(
            rows[0],
            [
                "iteration",
                "epoch",
                "train_loss",
                "test_accuracy",
                "grad_mse",
                "grad_cosine",
                "wall_ms",
                "mse:fc0",
                "cos:fc0",
                "mse:fc1",
                "cos:fc1",
            ],
        )
        self.assertEqual([row[0] for row in rows[1:]], ["2", "4"])
        self.assertEqual(set(row[6] for row in rows[1:]), set(["0"]))
        self.assertEqual(record.iteration, 4)
        self.assertEqual(float(rows[-1][3]), record.test_accuracy)
        for name in (run.experiment_path, run.log_path, run.weights_path):
            self.assertTrue(os.path.exists(name), name)

    def test_epoch_end_evaluation(self):
        """Interval evaluations plus one at every epoch end"""
        config = self.config(
            SMALL, "epochs", **{"schedule.eval_every": "3", "schedule.epochs": "2"}
        )
        _, run = run_experiment(config, self.spool)
        with open(run.metrics_path) as fileobj:
            rows = list(csv.reader(fileobj))[1:]
        self.assertEqual(
            [(row[0], row[1]) for row in rows], [("3", "0"), ("4", "0"), ("6", "1"), ("8", "1")]
        )

    def test_summary(self):
        """run.conf records the completed run"""
        record, run = run_experiment(self.config(SMALL, "plain"), self.spool)
        summary = RunEntry(run.path).summary
        self.assertEqual(summary["status"], "completed")
        self.assertEqual(summary["mode"], "plain")
        self.assertEqual(summary["iterations"], 4)
        self.assertEqual(summary["final_accuracy"], record.test_accuracy)
        self.assertIsNone(summary["delta"])

    def test_deterministic(self):
        """Same config and seed, byte-identical metrics"""
        _, first = run_experiment(self.config(SMALL, "first"), self.spool)
        _, second = run_experiment(self.config(SMALL, "second"), self.spool)
        with open(first.metrics_path, "rb") as one, open(second.metrics_path, "rb") as two:
            self.assertEqual(one.read(), two.read())

    def test_meta_deterministic(self):
        """Meta runs with the same seed reproduce metrics and psi exactly"""
        overrides = {"hypernet.design": "duallstmfc", "schedule.eval_every": "1"}
        _, first = run_experiment(self.config(META, "meta-first", **overrides), self.spool)
        _, second = run_experiment(self.config(META, "meta-second", **overrides), self.spool)
        with open(first.metrics_path, "rb") as one, open(second.metrics_path, "rb") as two:
            self.assertEqual(one.read(), two.read())
        psi_first = first.load_arrays(first.hypernet_path)
        psi_second = second.load_arrays(second.hypernet_path)
        self.assertEqual(sorted(psi_first), sorted(psi_second))
        for name, value in psi_first.items():
            self.assertTrue(np.array_equal(value, psi_second[name]), name)

    def test_meta_run(self):
        """Meta runs save the hypernetwork too"""
        record, run = run_experiment(self.config(META, "meta"), self.spool)
        self.assertEqual(record.iteration, 2)
        arrays = run.load_arrays(run.hypernet_path)
        self.assertEqual(sorted(arrays), ["fc0.bias", "fc0.weight", "fc1.bias", "fc1.weight"])
        self.assertEqual(load_run(run.path).summary["mode"], "meta")

    def test_reference_delta(self):
        """delta = accuracy - reference accuracy"""
        ref_record, ref_run = run_experiment(self.config(SMALL, "fp", mode="fp"), self.spool)
        config = self.config(SMALL, "plain", **{"output.reference_run": ref_run.path})
        record, run = run_experiment(config, self.spool)
        summary = RunEntry(run.path).summary
        self.assertEqual(summary["reference_accuracy"], ref_record.test_accuracy)
        self.assertAlmostEqual(
            summary["delta"], record.test_accuracy - ref_record.test_accuracy, places=12
        )

    def test_missing_reference(self):
        """An unknown reference run is a configuration error"""
        config = self.config(SMALL, "plain", **{"output.reference_run": self.path("nowhere")})
        self.assertRaises(ConfigError, run_experiment, config, self.spool)

    def test_abort(self):
        """A diverging run is recorded as aborted"""
        config = self.config(
            SMALL, "abort", mode="fp", **{"optimizer.lr": "inf", "schedule.debug": "yes"}
        )
        with np.errstate(all="ignore"):
            self.assertRaises(TrainingAbort, run_experiment, config, self.spool)
        run = RunEntry(self.path("abort"))
        self.assertEqual(run.summary["status"], "aborted")
        self.assertTrue(os.path.exists(run.abort_path))

    def test_locked_directory(self):
        """Two writers cannot share a run directory"""
        run = self.spool.add_run(self.path("locked"))
        try:
            self.assertRaises(LockError, RunEntry(run.path).prepare)
            self.assertRaises(
                ConfigError, run_experiment, self.config(SMALL, "locked"), self.spool
            )
        finally:
            run.release()

    def test_spool_listing(self):
        """Timestamped runs are created under the spool"""
        first = self.spool.add_run()
        second = self.spool.add_run()
        first.flush()
        second.flush()
        self.assertNotEqual(first.path, second.path)
        self.assertEqual([run.path for run in self.spool], sorted([first.path, second.path]))
        self.assertRaises(ConfigError, load_run, self.path("nowhere"))


# one epoch of momentum SGD on two-gaussians with a 64-wide MLP
BITS = [
    "model.widths = 64",
    "data.kind = two-gaussians",
    "data.train_size = 1000",
    "data.test_size = 100",
    "schedule.epochs = 1",
    "schedule.batch_size = 32",
    "optimizer.kind = momentum",
    "optimizer.lr = 0.01",
    "output.save_weights = no",
]

SEEDS = (0, 1, 2)


class TestGradientBits(HarnessTestCase):
    """Final training loss against full-precision gradients"""

    def final_loss(self, mode, seed, **overrides):
        name = "%s-%s-%d" % (mode, overrides.get("quant.grad_bits", "fp"), seed)
        config = self.config(BITS, name, mode=mode, seed=str(seed), **overrides)
        record, _ = run_experiment(config, self.spool)
        return record.train_loss

    def test_sixteen_bits_match_fp(self):
        """16-bit gradients end within 2% of the fp loss on every seed"""
        for seed in SEEDS:
            full = self.final_loss("fp", seed)
            plain = self.final_loss("plain", seed, **{"quant.grad_bits": "16"})
            self.assertLessEqual(abs(plain - full), 0.02 * full, seed)

    def test_two_bits_worse_than_fp(self):
        """2-bit gradients over a fixed range of +-8 are worse than fp on every seed

        Every weight gradient below half the range rounds to zero at 2 bits,
        so only the (full precision) biases keep learning.
        """
        for seed in SEEDS:
            full = self.final_loss("fp", seed)
            plain = self.final_loss(
                "plain", seed, **{"quant.grad_bits": "2", "quant.clip": "fixed(8)"}
            )
            self.assertGreater(plain, full, seed)


class TestEvalAccuracy(unittest.TestCase):
    """Accuracy in [0, 1]"""

    def setUp(self):
        self.model = build_model(ModelSpec("mlp", 10, (4,), widths=[4, 16, 10]), 0)
        self.images = np.random.RandomState(0).normal(size=(2000, 4))

    def test_all_correct(self):
        """Labels equal to the predictions score 1"""
        labels = np.argmax(self.model.predict(self.images), axis=1)
        dataset = Dataset(self.images, labels, num_classes=10)
        self.assertEqual(eval_accuracy(self.model, dataset), 1.0)

    def test_chance(self):
        """Random labels score about one in ten"""
        labels = np.random.RandomState(1).randint(0, 10, size=2000)
        dataset = Dataset(self.images, labels, num_classes=10)
        self.assertAlmostEqual(eval_accuracy(self.model, dataset), 0.1, delta=0.05)

    def test_batch_size(self):
        """The batch size does not change the result"""
        labels = np.random.RandomState(2).randint(0, 10, size=2000)
        dataset = Dataset(self.images, labels, num_classes=10)
        self.assertEqual(
            eval_accuracy(self.model, dataset, 7), eval_accuracy(self.model, dataset, 256)
        )

    def test_empty(self):
        """An empty test set is an error"""
        dataset = Dataset(np.zeros((0, 4)), np.zeros(0), num_classes=10)
        self.assertRaises(ValueError, eval_accuracy, self.model, dataset)

    def test_record_ranges(self):
        """Metrics records reject impossible values"""
        self.assertRaises(ValueError, MetricsRecord, 1, 0, 0.5, 1.5, 0.0, 1.0)
        self.assertRaises(ValueError, MetricsRecord, 1, 0, 0.5, 0.5, 0.0, 1.5)
        self.assertEqual(MetricsRecord(1, 0, 0.5, 0.25, 0.0, 1.0).row()[3], "0.25")


class TestAblation(HarnessTestCase):
    """Ablation summaries"""

    def test_variants(self):
        """fp and plain baselines, then one meta variant per design"""
        self.assertEqual(
            variants(["multifc"]),
            [("fp", "fp", None), ("plain", "plain", None), ("meta:multifc", "meta", "multifc")],
        )

    def test_summarize(self):
        """Mean, std and delta against the fp mean"""
        summary = summarize({"fp": [0.8, 0.9], "plain": [0.7, 0.7]})
        mean, std, delta = summary["plain"]
        self.assertAlmostEqual(mean, 0.7)
        self.assertEqual(std, 0.0)
        self.assertAlmostEqual(delta, -0.15)
        self.assertAlmostEqual(summary["fp"][2], 0.0)
        self.assertIsNone(summarize({"plain": [0.5]})["plain"][2])

    def test_write_summary(self):
        """One CSV row per variant"""
        accuracies = {"fp": [0.8, 0.9]}
        path = self.path("ablation.csv")
        write_summary(path, summarize(accuracies), accuracies, [0, 1])
        with open(path) as fileobj:
            rows = list(csv.reader(fileobj))
        self.assertEqual(rows[0][-2:], ["accuracy:seed0", "accuracy:seed1"])
        self.assertEqual(rows[1][:2], ["fp", "2"])


class TestCommandLine(HarnessTestCase):
    """Exit codes of the metaquant command"""

    def run_main(self, *args):
        return main(["-q", "-c", self.path("global.conf")] + list(args))

    def write_config(self, lines):
        path = self.path("experiment.conf")
        with open(path, "w") as fileobj:
            fileobj.write("\n".join(lines) + "\n")
        return path

    def test_train_and_eval(self):
        """train then eval succeed"""
        path = self.write_config(SMALL)
        out = self.path("cli-run")
        self.assertEqual(self.run_main("train", "--config", path, "--out", out), 0)
        self.assertEqual(RunEntry(out).summary["status"], "completed")
        self.assertEqual(self.run_main("eval", "--run", out), 0)

    def test_config_error(self):
        """A bad config exits 3"""
        path = self.write_config(SMALL + ["quant.grad_bit = 4"])
        self.assertEqual(self.run_main("train", "--config", path, "--out", self.path("x")), 3)
        path = self.write_config(SMALL)
        self.assertEqual(
            self.run_main("train", "--config", path, "--grad-bits", "1", "--out", self.path("y")),
            3,
        )
        self.assertEqual(self.run_main("eval", "--run", self.path("nowhere")), 3)

    def test_abort(self):
        """A diverging run exits 2"""
        path = self.write_config(SMALL + ["schedule.debug = yes"])
        with np.errstate(all="ignore"):
            code = self.run_main(
                "train", "--config", path, "--mode", "fp", "--lr", "inf", "--out", self.path("z")
            )
        self.assertEqual(code, 2)

    def test_checks(self):
        """Quantizer and hypernetwork gradient checks pass"""
        self.assertEqual(self.run_main("quantizer-check", "--cases", "1000"), 0)
        self.assertEqual(self.run_main("grad-check", "--design", "multifc", "--skip-ops"), 0)

    def test_ablation(self):
        """The ablation table matches the runs it trained"""
        path = self.write_config(SMALL)
        out = self.path("ablation")
        code = self.run_main(
            "ablation",
            "--config",
            path,
            "--seeds",
            "2",
            "--design",
            "multifc",
            "--design",
            "lstmfc",
            "--out",
            out,
        )
        self.assertEqual(code, 0)
        with open(os.path.join(out, "ablation.csv")) as fileobj:
            rows = list(csv.reader(fileobj))
        self.assertEqual(
            rows[0],
            [
                "variant",
                "runs",
                "mean_accuracy",
                "std_accuracy",
                "delta_vs_fp",
                "accuracy:seed0",
                "accuracy:seed1",
            ],
        )
        table = dict((row[0], row[1:]) for row in rows[1:])
        self.assertEqual(
            [row[0] for row in rows[1:]], ["fp", "plain", "meta:multifc", "meta:lstmfc"]
        )
        self.assertEqual(float(table["fp"][3]), 0.0)
        fp_mean = np.mean([float(value) for value in table["fp"][4:]])
        for label, (runs, mean, std, delta, first, second) in table.items():
            self.assertEqual(runs, "2")
            seeds = [float(first), float(second)]
            for seed, accuracy in enumerate(seeds):
                run = RunEntry(os.path.join(out, "%s-seed%d" % (label.replace(":", "-"), seed)))
                self.assertEqual(run.summary["status"], "completed")
                self.assertEqual(run.summary["seed"], seed)
                self.assertEqual(run.summary["final_accuracy"], accuracy)
            self.assertAlmostEqual(float(mean), np.mean(seeds), places=12)
            self.assertAlmostEqual(float(std), np.std(seeds), places=12)
            self.assertAlmostEqual(float(delta), np.mean(seeds) - fp_mean, places=12)
        meta_run = RunEntry(os.path.join(out, "meta-lstmfc-seed1"))
        self.assertEqual(meta_run.summary["mode"], "meta")
        self.assertTrue(os.path.exists(meta_run.hypernet_path))

    def test_misc_commands(self):
        """list-plugins and mk-config"""
        self.assertEqual(self.run_main("list-plugins"), 0)
        path = self.path("template.conf")
        self.assertEqual(self.run_main("mk-config", "--file", path), 0)
        self.assertEqual(ExperimentConfig(path)["mode"], "meta")
        self.assertEqual(main([]), 1)

    def test_plugin_table(self):
        """Design parameter counts and column alignment"""
        self.assertEqual(design_param_count(load_hypernet_design("duallstmfc"), 11), 628)
        table = format_table([["type", "name"], ["hypernet", "multifc"]])
        self.assertEqual(
            table.splitlines(), ["type      name", "--------  -------", "hypernet  multifc"]
        )


if __name__ == "__main__":
    unittest.main()
