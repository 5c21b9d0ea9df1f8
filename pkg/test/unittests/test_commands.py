import csv
import json
import os
from tempfile import TemporaryDirectory
from unittest import TestCase, mock

from numpy.testing import assert_allclose

from rve_stability.commands import (cmd_homogenize, cmd_mesh_info, cmd_stability,
                                    cmd_stress_drive, cmd_sweep_compare)
from rve_stability.config import load_config
from rve_stability.continuation import PathRunner
from rve_stability.errors import ConfigError
from rve_stability.mesh import write_mesh
from .mocks import small_config, square_grid

CHECK = PathRunner.check


def _unstable_above(threshold):
    """PathRunner.check replacement that flags every point beyond threshold."""
    def check(runner, point, full=True):
        result = CHECK(runner, point, full)
        result.beta_unstable = point.lam > threshold
        return result
    return check


def _rows(path):
    with open(path) as f:
        return list(csv.DictReader(f))


class TestCommands(TestCase):
    def setUp(self):
        self._tmp = TemporaryDirectory()
        self.tmp = self._tmp.name
        self.overrides = small_config(self.tmp)

    def tearDown(self):
        self._tmp.cleanup()

    def _config(self, **sections):
        for name, values in sections.items():
            self.overrides.setdefault(name, {}).update(values)
        return load_config(None, self.overrides)

    def test_mesh_info_from_file(self):
        path = write_mesh(square_grid(2), os.path.join(self.tmp, "cell.mesh"))
        summary = cmd_mesh_info(mesh_file=path)
        self.assertEqual(summary.final["m"], 5)
        self.assertLess(summary.final["duality_residual"], 1e-12)
        with self.assertRaises(ConfigError):
            cmd_mesh_info()

    def test_homogenize(self):
        config = self._config(load={"F": [1.05, 0.0, 0.0, 0.95], "n_steps": 2},
                              output={"write_mesh": True})
        summary = cmd_homogenize(config)
        self.assertEqual(summary.statistics["steps"], 2)
        rows = _rows(os.path.join(self.tmp, "homogenize.csv"))
        self.assertEqual(len(rows), 2)
        self.assertAlmostEqual(float(rows[-1]["F22"]), 0.95)
        self.assertTrue(os.path.isfile(os.path.join(self.tmp, "mesh.txt")))
        with open(os.path.join(self.tmp, "summary.json")) as f:
            data = json.load(f)
        self.assertEqual(data["tool"], "rve-stability")
        assert_allclose(data["final"]["F"], [1.05, 0.0, 0.0, 0.95])

    def test_homogenize_bad_F(self):
        config = self._config(load={"F": [1.0, 1.0]})
        with self.assertRaises(ConfigError):
            cmd_homogenize(config)

    def test_stress_drive(self):
        config = self._config(load={"control": "stress_driven", "lambda_start": 0.0,
                                    "lambda_step": 0.5, "lambda_max": 1.0})
        summary = cmd_stress_drive(config)
        self.assertEqual(summary.status, "ok")
        rows = _rows(os.path.join(self.tmp, "stress_path.csv"))
        self.assertEqual([float(r["lambda"]) for r in rows], [0.0, 0.5, 1.0])
        self.assertAlmostEqual(float(rows[-1]["tau22"]), -1.0, places=6)

    def test_stress_drive_needs_stress_control(self):
        with self.assertRaises(ConfigError):
            cmd_stress_drive(self._config())

    def test_stability(self):
        summary = cmd_stability(self._config(), method="cond1", threads=1)
        self.assertEqual(summary.status, "no_bifurcation")
        self.assertIsNone(summary.report)
        self.assertEqual(summary.statistics["ordering_violations"], 0)
        self.assertEqual(len(_rows(os.path.join(self.tmp, "history.csv"))), 3)

    def test_sweep_compare(self):
        summary = cmd_stability(self._config(), method="all", threads=1)
        self.assertEqual(summary.command, "sweep-compare")
        self.assertEqual(set(summary.final["status"].values()), {"no_bifurcation"})
        for method in ("cond1", "cond2", "nullspace"):
            self.assertTrue(os.path.isfile(os.path.join(self.tmp, f"{method}_history.csv")))

    def test_sweep_compare_direct(self):
        summary = cmd_sweep_compare(self._config(), threads=2)
        self.assertNotEqual(summary.status, "mismatch")
        self.assertEqual(set(summary.final["lambda_c"].values()), {None})

    def test_homogenize_reports_pivots_and_quadrature(self):
        config = self._config(load={"F": [1.02, 0.0, 0.0, 0.99], "n_steps": 2})
        summary = cmd_homogenize(config)
        for record in summary.records:
            self.assertGreater(record["min_pivot"], 0.0)
        self.assertEqual(summary.quadrature, {"Q4_disp": {"rule": "gauss 2x2", "points": 4}})
        rows = _rows(os.path.join(self.tmp, "homogenize.csv"))
        self.assertGreater(float(rows[-1]["min_pivot"]), 0.0)
        with open(os.path.join(self.tmp, "summary.json")) as f:
            data = json.load(f)
        self.assertIn("Q4_disp", data["quadrature"])
        self.assertIn("min_pivot", data["final"])

    def test_mixed_quadrature_metadata(self):
        config = self._config(mesh={"generator": {"radius": 0.0, "target_elements": 4,
                                                  "kind": "Q9"}})
        summary = cmd_mesh_info(config)
        self.assertEqual(summary.quadrature["Q9P3_mixed"]["points"], 9)
        self.assertEqual(summary.quadrature["Q9P3_mixed"]["rule"], "gauss 3x3")

    def test_stress_drive_stops_at_bifurcation(self):
        config = self._config(load={"control": "stress_driven", "lambda_start": 0.0,
                                    "lambda_step": 0.5, "lambda_max": 2.0},
                              tolerances={"bisect_tol": 1e-2})
        with mock.patch.object(PathRunner, "check", autospec=True,
                               side_effect=_unstable_above(0.75)):
            summary = cmd_stress_drive(config)
        self.assertEqual(summary.status, "bifurcation")
        self.assertEqual([r["lambda"] for r in summary.records], [0.0, 0.5, 1.0])
        low, high = summary.report["bracket"]
        self.assertLessEqual(low, 0.75)
        self.assertGreater(high, 0.75)
        self.assertLessEqual(high - low, 1e-2)
        self.assertAlmostEqual(summary.report["lambda_c"], 0.75, delta=1e-2)
        rows = _rows(os.path.join(self.tmp, "stress_path.csv"))
        self.assertEqual(len(rows), 3)
        self.assertGreater(float(rows[0]["beta_min"]), 0.0)

    def test_stress_drive_unstable_at_start(self):
        config = self._config(load={"control": "stress_driven", "lambda_start": 0.0,
                                    "lambda_step": 0.5, "lambda_max": 1.0})
        with mock.patch.object(PathRunner, "check", autospec=True,
                               side_effect=_unstable_above(-1.0)):
            summary = cmd_stress_drive(config)
        self.assertEqual(summary.status, "bifurcation")
        self.assertEqual(len(summary.records), 1)
        self.assertEqual(summary.report["bracket"], [0.0, 0.0])
