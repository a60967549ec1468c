#!/usr/bin/env python3
"""End-to-end checks of the refqkd command-line tool.

usage: cli_test.py <path-to-refqkd> <schema-dir>
"""

import csv
import filecmp
import json
import os
import subprocess
import sys
import tempfile
import unittest
from pathlib import Path

import jsonschema
from referencing import Registry, Resource

CLI = None
SCHEMA_DIR = None


def load_registry():
    resources = []
    for path in sorted(SCHEMA_DIR.glob("*.schema.json")):
        doc = json.loads(path.read_text())
        resources.append((doc["$id"], Resource.from_contents(doc)))
    return Registry().with_resources(resources)


def run(args, out_dir=None, env=None, expect=0):
    cmd = [str(CLI)] + list(args)
    if out_dir is not None:
        cmd += ["--out-dir", str(out_dir)]
    proc = subprocess.run(cmd, capture_output=True, text=True, env=env, timeout=600)
    if proc.returncode != expect:
        raise AssertionError(
            f"{' '.join(cmd)} exited {proc.returncode}, expected {expect}\n"
            f"stdout: {proc.stdout}\nstderr: {proc.stderr}")
    return proc


class CliTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.registry = load_registry()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls.tmp.name)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def validate(self, path, schema_name):
        doc = json.loads(Path(path).read_text())
        schema = json.loads((SCHEMA_DIR / schema_name).read_text())
        jsonschema.Draft202012Validator(schema, registry=self.registry).validate(doc)
        return doc

    def fresh(self, name):
        d = self.root / name
        d.mkdir(parents=True, exist_ok=False)
        return d

    def test_verify_example(self):
        d = self.fresh("verify")
        run(["verify", "--beta-sq", "0.01", "--n-max", "32"], d)
        doc = self.validate(d / "verify.json", "verify.schema.json")
        self.assertTrue(doc["pass"])
        self.assertLess(doc["dev_kraus_k0"], 1e-8)

    def test_region_example(self):
        d = self.fresh("region")
        run(["region", "--alpha-sq", "0.5", "--eta", "0.01", "--threads", "4"], d)
        doc = self.validate(d / "region.json", "region.schema.json")
        ys = [p["err_rate"] for p in doc["contour"]]
        self.assertTrue(ys)
        self.assertLess(max(ys), 0.01)
        self.assertLess(doc["summary"]["max_err_rate"], 0.01)

    def test_region_csv_headers(self):
        d = self.fresh("region_csv")
        run(["region", "--alpha-sq", "0.5", "--eta", "0.01", "--columns", "20", "--rows", "30",
             "--format", "csv"], d)
        for name in ("region_contour.csv", "region_curve_a.csv", "region_curve_b.csv"):
            with open(d / name, newline="") as f:
                rows = list(csv.reader(f))
            self.assertEqual(rows[0], ["n_fil_over_nfil0", "err_rate", "gain"])
            self.assertGreater(len(rows), 1)
            for r in rows[1:]:
                [float(x) for x in r]

    def test_optimize_example(self):
        d = self.fresh("optimize")
        run(["optimize", "--eta", "1e-3", "--gamma", "0", "--zeta", "0"], d)
        doc = self.validate(d / "optimize.json", "optimize.schema.json")
        row = doc["series"][0]["rows"][0]
        self.assertAlmostEqual(row["alpha_sq_opt"], 0.23, delta=0.02)
        self.assertAlmostEqual(row["reference_gain"], 5e-4, delta=1e-15)

    def test_optimize_csv_and_reference(self):
        d = self.fresh("optimize_csv")
        ref = self.root / "ref.csv"
        ref.write_text("eta,gain\n0.001,0.0002\n0.01,0.002\n")
        run(["optimize", "--eta", "1e-3", "1e-2", "--gamma", "0", "1e-4", "--zeta", "0",
             "--alpha-sq-min", "0.01", "--alpha-sq-max", "2", "--points-per-decade", "10",
             "--reference", str(ref), "--format", "csv"], d)
        for name in ("optimize_0.csv", "optimize_1.csv"):
            with open(d / name, newline="") as f:
                rows = list(csv.reader(f))
            self.assertEqual(rows[0], ["eta", "alpha_sq_opt", "gain", "reference_gain"])
            self.assertEqual(len(rows), 3)
        self.assertTrue((d / "optimize_reference.csv").exists())

    def test_gain_models(self):
        for name, args in [("a", ["--zeta", "0.01"]), ("a2", ["--lambda", "1e-4"]),
                           ("b", ["--delta-phi", "0.05"]),
                           ("m", ["--n-fil", "10100", "--n-err", "5", "--n-pairs", "1000000",
                                  "--alpha-sq", "0.5"])]:
            d = self.fresh("gain_" + name)
            run(["gain"] + args, d)
            doc = self.validate(d / "gain.json", "gain.schema.json")
            self.assertGreaterEqual(doc["result"]["gain"], 0.0)

    def test_gain_exclusive_models(self):
        proc = run(["gain", "--zeta", "0.01", "--delta-phi", "0.1"], self.root / "unused", expect=2)
        self.assertIn("choose one model", proc.stderr)
        run(["gain", "--lambda", "0.01", "--gamma", "0.01"], self.root / "unused", expect=2)
        run(["gain", "--n-err", "0.001"], self.root / "unused", expect=2)

    def test_simulate(self):
        d = self.fresh("simulate")
        run(["simulate", "--n", "200000", "--seed", "5", "--alpha-sq", "0.23", "--eta", "0.01"], d)
        doc = self.validate(d / "simulate.json", "simulate.schema.json")
        self.assertEqual(doc["sim"]["n_err"], 0)
        self.assertEqual(sum(h["count"] for h in doc["sim"]["histogram"]), 400000)
        self.assertIsNotNone(doc["key"])

    def test_simulate_csv(self):
        d = self.fresh("simulate_csv")
        run(["simulate", "--n", "50000", "--format", "csv"], d)
        with open(d / "simulate_histogram.csv", newline="") as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows[0], ["alice", "bob", "outcome", "count"])
        self.assertEqual(len(rows), 13)
        with open(d / "simulate_key.csv", newline="") as f:
            self.assertEqual(next(csv.reader(f))[0], "n_fil_frac")

    def test_deterministic_outputs(self):
        cases = [
            ["verify", "--beta-sq", "0.3", "--n-max", "40"],
            ["region", "--alpha-sq", "1e-3", "--eta", "0.01", "--columns", "30", "--rows", "40"],
            ["region", "--alpha-sq", "1e-3", "--eta", "0.01", "--columns", "30", "--rows", "40",
             "--format", "csv"],
            ["optimize", "--eta-min", "1e-4", "--eta-max", "1e-2", "--eta-points", "3",
             "--alpha-sq-min", "0.01", "--alpha-sq-max", "2", "--points-per-decade", "10"],
            ["gain", "--delta-phi", "0.02"],
            ["simulate", "--n", "100000", "--seed", "17", "--lambda", "1e-4"],
            ["simulate", "--n", "100000", "--seed", "17", "--lambda", "1e-4", "--format", "csv"],
        ]
        for i, args in enumerate(cases):
            a = self.fresh(f"det_{i}_a")
            b = self.fresh(f"det_{i}_b")
            run(args, a)
            run(args + ["--threads", "3"], b)
            names = sorted(p.name for p in a.iterdir())
            self.assertEqual(names, sorted(p.name for p in b.iterdir()))
            match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
            self.assertEqual(mismatch + errors, [], f"{args}: {mismatch} {errors}")

    def test_config_file_and_precedence(self):
        cfg = {"subcommand": "gain", "alpha_sq": 0.5, "eta": 0.01, "zeta": 0.001}
        schema = json.loads((SCHEMA_DIR / "config.schema.json").read_text())
        jsonschema.Draft202012Validator(schema, registry=self.registry).validate(cfg)
        path = self.root / "cfg.json"
        path.write_text(json.dumps(cfg))
        d1, d2 = self.fresh("cfg1"), self.fresh("cfg2")
        run(["--config", str(path), "gain"], d1)
        run(["--config", str(path), "gain", "--alpha-sq", "0.23"], d2)
        p1 = json.loads((d1 / "gain.json").read_text())["params"]
        p2 = json.loads((d2 / "gain.json").read_text())["params"]
        self.assertEqual(p1["alpha_sq"], 0.5)
        self.assertEqual(p2["alpha_sq"], 0.23)

    def test_config_errors(self):
        bad = self.root / "bad.json"
        bad.write_text('{"not_an_option": 1}')
        proc = run(["--config", str(bad), "gain"], self.root / "unused", expect=2)
        self.assertIn("not_an_option", proc.stderr)
        broken = self.root / "broken.json"
        broken.write_text("{")
        run(["--config", str(broken), "gain"], self.root / "unused", expect=2)
        run(["--config", str(self.root / "missing.json"), "gain"], self.root / "unused", expect=6)

    def test_env_out_dir(self):
        d = self.root / "from_env"
        env = dict(os.environ, REFQKD_OUT_DIR=str(d))
        run(["gain"], env=env)
        self.assertTrue((d / "gain.json").exists())

    def test_exit_codes(self):
        u = self.root / "unused"
        run(["gain", "--eta", "2"], u, expect=3)
        run(["gain", "--zeta", "0.6"], u, expect=3)
        run(["gain", "--alpha-sq", "0.5", "--n-fil", "0.005", "--n-err", "0"], u, expect=4)
        run(["verify", "--beta-sq", "9", "--n-max", "8"], u, expect=5)
        run(["verify", "--beta-sq", "1", "--n-max", "8", "--max-tail", "1"], u, expect=7)
        blocker = self.root / "blocker"
        blocker.write_text("")
        run(["gain", "--out-dir", str(blocker / "sub")], expect=6)
        run(["gain", "--no-such-flag"], u, expect=2)
        run([], expect=2)
        run(["gain", "--format", "xml"], u, expect=2)
        proc = run(["--help"])
        self.assertIn("simulate", proc.stdout)


if __name__ == "__main__":
    if len(sys.argv) < 3:
        sys.exit(__doc__)
    CLI = Path(sys.argv[1]).resolve()
    SCHEMA_DIR = Path(sys.argv[2]).resolve()
    unittest.main(argv=sys.argv[:1], verbosity=2)
