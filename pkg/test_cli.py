"""
Tests for experiment configs, the run pipeline and the command line.
"""
import io
import json
import os
import shutil
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from unittest import mock

from brwlab import ConfigError
from brwlab.cli import (EXIT_OK, EXIT_REJECTED, canonical_json, load_config, main, parse_config,
                        reproduce_example, run_experiment, validate_report)


class CliTestCase(unittest.TestCase):
    """Temporary directory and config helpers."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def write_config(self, data, name="config.json"):
        path = os.path.join(self.temp_dir, name)
        with open(path, "w") as fh:
            json.dump(data, fh)
        return path

    def read_json(self, *parts):
        with open(os.path.join(self.temp_dir, *parts)) as fh:
            return json.load(fh)

    def run_main(self, argv):
        out, err = io.StringIO(), io.StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            status = main(argv)
        return status, out.getvalue(), err.getvalue()


class ParseConfigTests(unittest.TestCase):
    """Tests for parse_config."""

    def test_defaults(self):
        """Test that string tasks and missing settings get defaults."""
        config = parse_config({"model": {"example": "galton-watson"}, "tasks": ["extinction"]})
        self.assertEqual(config.name, "galton-watson")
        self.assertEqual(config.tasks, [{"task": "extinction"}])
        self.assertEqual(config.settings["N"], 50)
        self.assertEqual(config.output, "brwlab-out")

    def test_task_overrides(self):
        """Test that task entries override shared settings."""
        config = parse_config({"model": {"example": "galton-watson"}, "settings": {"N": 10},
                               "tasks": [{"task": "series", "N": 20}, "series"]})
        self.assertEqual(config.task_settings(config.tasks[0])["N"], 20)
        self.assertEqual(config.task_settings(config.tasks[1])["N"], 10)

    def test_rejections(self):
        """Test malformed configs."""
        bad = [
            [],
            {"model": {"example": "galton-watson"}, "tasks": []},
            {"model": {"example": "nowhere"}, "tasks": ["validate"]},
            {"model": {"example": "galton-watson", "laws": {}}, "tasks": ["validate"]},
            {"model": {"rates": {"a": {"a": 1}}}, "tasks": ["validate"]},
            {"model": {"example": "galton-watson"}, "tasks": ["fly"]},
            {"model": {"example": "galton-watson"}, "tasks": ["never-hit"]},
            {"model": {"example": "galton-watson"}, "tasks": [{"task": "simulate", "mode": "local"}]},
            {"model": {"example": "galton-watson"}, "tasks": ["validate"], "settings": {"N": "ten"}},
            {"model": {"example": "galton-watson"}, "tasks": ["validate"], "settings": {"speed": 1}},
            {"model": {"example": "galton-watson"}, "tasks": ["validate"], "settings": {"mode": "weak"}},
            {"model": {"example": "galton-watson"}, "tasks": ["validate"], "colour": "red"},
        ]
        for data in bad:
            with self.assertRaises(ConfigError, msg=repr(data)):
                parse_config(data)

    def test_canonical_json(self):
        """Test that key order does not change the canonical form."""
        self.assertEqual(canonical_json({"b": 1, "a": [1, 2]}), canonical_json({"a": [1, 2], "b": 1}))
        self.assertEqual(canonical_json({"a": 1}), '{"a":1}')

    def test_validate_report(self):
        """Test that schema violations are listed."""
        self.assertTrue(validate_report({}))
        report = {"schema": 1, "experiment": "e", "model": {}, "seed": 0,
                  "tasks": [{"task": "validate", "status": "maybe", "result": {}, "files": []}]}
        self.assertEqual(validate_report(report), ["report.tasks[0].status must be 'ok' or 'failed'"])


class RunExperimentTests(CliTestCase):
    """Tests for run_experiment."""

    def test_gw_extinction(self):
        """Test the Galton-Watson extinction task end to end."""
        out = os.path.join(self.temp_dir, "gw")
        config = parse_config({"name": "gw", "model": {"example": "galton-watson"},
                               "tasks": ["validate", "extinction"]}, out)
        self.assertEqual(run_experiment(config), EXIT_OK)
        with open(os.path.join(out, "report.json")) as fh:
            report = json.load(fh)
        self.assertEqual(validate_report(report), [])
        self.assertEqual([t["status"] for t in report["tasks"]], ["ok", "ok"])
        self.assertAlmostEqual(report["tasks"][1]["result"]["at_x"][0], 1 / 3, places=9)
        self.assertEqual(report["tasks"][1]["files"], ["extinction.csv"])
        with open(os.path.join(out, "manifest.json")) as fh:
            manifest = json.load(fh)
        self.assertEqual(set(manifest["files"]), {"extinction.csv", "report.json"})
        self.assertIn("numpy", manifest["versions"])
        self.assertTrue(os.path.exists(os.path.join(out, "results.db")))

    def test_tree_local_survival(self):
        """Test classify-local on T_3 above the local critical value."""
        out = os.path.join(self.temp_dir, "tree")
        config = parse_config({"model": {"example": "tree", "params": {"d": 3, "lam": 0.5}},
                               "tasks": [{"task": "classify-local", "N": 8}]}, out)
        self.assertEqual(run_experiment(config), EXIT_OK)
        with open(os.path.join(out, "report.json")) as fh:
            report = json.load(fh)
        self.assertEqual(report["tasks"][0]["result"]["local"], "survives")

    def test_inline_models(self):
        """Test inline law tables and inline rates."""
        laws = {"model": {"laws": {"a": [[{"a": 2}, "3/4"], [{}, "1/4"]]}}, "tasks": ["extinction"]}
        config = parse_config(laws, os.path.join(self.temp_dir, "laws"))
        self.assertEqual(run_experiment(config), EXIT_OK)
        report = self.read_json("laws", "report.json")
        self.assertAlmostEqual(report["tasks"][0]["result"]["at_x"][0], 1 / 3, places=9)

        rates = {"model": {"rates": {"0": {"0": 1}}, "lam": 2}, "tasks": ["extinction"]}
        config = parse_config(rates, os.path.join(self.temp_dir, "rates"))
        self.assertEqual(run_experiment(config), EXIT_OK)
        report = self.read_json("rates", "report.json")
        self.assertAlmostEqual(report["tasks"][0]["result"]["at_x"][0], 0.5, places=9)

    def test_inline_law_with_unknown_child(self):
        """Test that a child vertex without a law is rejected."""
        config = parse_config({"model": {"laws": {"a": [[{"b": 1}, 1]]}}, "tasks": ["validate"]},
                              os.path.join(self.temp_dir, "bad"))
        with self.assertRaises(ConfigError):
            run_experiment(config)

    def test_seed_sources(self):
        """Test that an explicit seed beats BRWLAB_SEED, which beats the config."""
        data = {"model": {"example": "galton-watson"}, "settings": {"seed": 5, "trials": 10, "horizon": 5},
                "tasks": ["simulate"]}
        with mock.patch.dict(os.environ, {"BRWLAB_SEED": "11"}):
            config = parse_config(data, os.path.join(self.temp_dir, "env"))
            run_experiment(config)
            self.assertEqual(self.read_json("env", "report.json")["seed"], 11)
            config = parse_config(data, os.path.join(self.temp_dir, "arg"))
            run_experiment(config, seed=3)
            self.assertEqual(self.read_json("arg", "report.json")["seed"], 3)
        with mock.patch.dict(os.environ, {"BRWLAB_SEED": "eleven"}):
            with self.assertRaises(ConfigError):
                run_experiment(parse_config(data, os.path.join(self.temp_dir, "bad")))

    def test_manifest_rerun_is_identical(self):
        """Test that running a manifest reproduces report.json byte for byte."""
        path = self.write_config({
            "name": "replay",
            "model": {"example": "galton-watson"},
            "settings": {"trials": 50, "horizon": 20, "cap": 500, "seed": 7, "N": 20},
            "tasks": ["extinction", "series", "simulate", {"task": "sweep", "levels": [1, "inf"]}],
        })
        first = os.path.join(self.temp_dir, "first")
        second = os.path.join(self.temp_dir, "second")
        with mock.patch.dict(os.environ, {}, clear=False):
            os.environ.pop("BRWLAB_SEED", None)
            self.assertEqual(run_experiment(load_config(path, first)), EXIT_OK)
            manifest = os.path.join(first, "manifest.json")
            self.assertEqual(run_experiment(load_config(manifest, second)), EXIT_OK)
        with open(os.path.join(first, "report.json"), "rb") as fh:
            a = fh.read()
        with open(os.path.join(second, "report.json"), "rb") as fh:
            b = fh.read()
        self.assertEqual(a, b)
        m1 = self.read_json("first", "manifest.json")
        m2 = self.read_json("second", "manifest.json")
        self.assertEqual(m1["config_sha256"], m2["config_sha256"])
        self.assertEqual(m1["files"], m2["files"])


class MainTests(CliTestCase):
    """Tests for the command line entry point."""

    def test_run(self):
        """Test the run command with overrides."""
        path = self.write_config({"model": {"example": "galton-watson"},
                                  "settings": {"horizon": 10}, "tasks": ["simulate"]})
        out = os.path.join(self.temp_dir, "out")
        status, stdout, _ = self.run_main(["run", path, "--out", out, "--seed", "2", "--trials", "25"])
        self.assertEqual(status, EXIT_OK)
        self.assertEqual(stdout.strip(), os.path.join(out, "report.json"))
        report = self.read_json("out", "report.json")
        self.assertEqual(report["tasks"][0]["result"]["trials"], 25)
        self.assertEqual(sum(report["tasks"][0]["result"]["stop_reasons"].values()), 25)

    def test_malformed_config(self):
        """Test that malformed configs exit with status 2."""
        path = self.write_config({"model": {"example": "galton-watson"}, "tasks": []})
        status, _, err = self.run_main(["run", path])
        self.assertEqual(status, EXIT_REJECTED)
        self.assertIn("tasks", err)
        broken = os.path.join(self.temp_dir, "broken.json")
        with open(broken, "w") as fh:
            fh.write("{not json")
        self.assertEqual(self.run_main(["validate", broken])[0], EXIT_REJECTED)
        self.assertEqual(self.run_main(["validate", os.path.join(self.temp_dir, "missing.json")])[0],
                         EXIT_REJECTED)

    def test_rejected_model(self):
        """Test that parameters outside a model's domain exit with status 2."""
        path = self.write_config({"model": {"example": "strip", "params": {"p": 0.3}}, "tasks": ["validate"]})
        self.assertEqual(self.run_main(["validate", path])[0], EXIT_REJECTED)

    def test_validate(self):
        """Test that validate prints the validation report."""
        path = self.write_config({"model": {"example": "two-type-bp"}, "tasks": ["validate"]})
        status, stdout, _ = self.run_main(["validate", path])
        self.assertEqual(status, EXIT_OK)
        self.assertIsInstance(json.loads(stdout), dict)

    def test_reproduce(self):
        """Test the reproduction table of the two-type process."""
        rows = os.path.join(self.temp_dir, "rows.json")
        status, stdout, _ = self.run_main(["reproduce", "two-type-bp", "--json", rows])
        self.assertEqual(status, EXIT_OK)
        self.assertIn("PASS", stdout)
        self.assertNotIn("FAIL", stdout)
        data = self.read_json("rows.json")
        self.assertEqual({r["fact"] for r in data}, {"q1", "q2", "period", "local"})
        self.assertEqual(self.run_main(["reproduce", "nowhere"])[0], EXIT_REJECTED)
        self.assertEqual(self.run_main(["reproduce", "galton-watson", "--params", "{bad"])[0], EXIT_REJECTED)

    def test_reproduce_example(self):
        """Test reproduce_example with parameters."""
        stream = io.StringIO()
        results = reproduce_example("continuous-bp", {"lam_k": 4}, stream)
        self.assertEqual(len(results), 1)
        self.assertTrue(results[0].passed)
        self.assertAlmostEqual(results[0].computed, 0.25, places=9)
        self.assertIn("continuous-bp", stream.getvalue())

    def test_catalog(self):
        """Test the catalog listing in both forms."""
        status, stdout, _ = self.run_main(["catalog"])
        self.assertEqual(status, EXIT_OK)
        self.assertIn("galton-watson", stdout)
        status, stdout, _ = self.run_main(["catalog", "--json"])
        ids = [d["id"] for d in json.loads(stdout)]
        self.assertEqual(ids, sorted(ids))
        self.assertIn("radial-tree", ids)


if __name__ == '__main__':
    unittest.main()
