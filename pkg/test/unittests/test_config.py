import json
import os
from math import pi
from tempfile import TemporaryDirectory
from unittest import TestCase, mock

from rve_stability.config import RunConfig, default_config, load_config
from rve_stability.errors import ConfigError
from rve_stability.homogenizer import LinearBoundary, PeriodicBoundary
from .mocks import base_config, small_config

PATCH_MODULE = "rve_stability.config"


class TestDefaults(TestCase):
    def test_packaged_defaults(self):
        config = load_config()
        self.assertEqual(config.analysis, "homogenize")
        self.assertEqual(config.to_dict(), {k: base_config()[k] for k in config.to_dict()})
        self.assertEqual(default_config()["bloch"]["method"], "nullspace")

    def test_overrides_merge(self):
        config = load_config(None, {"bloch": {"n_coarse": 8}})
        self.assertEqual(config.bloch["n_coarse"], 8)
        self.assertEqual(config.bloch["n_refined"], 100)

    def test_materials_replace(self):
        config = load_config(None, {"materials": {"2": {"kind": "neo_hookean",
                                                         "kappa": 1.0, "mu": 1.0}}})
        self.assertEqual(list(config.materials), ["2"])


class TestValidation(TestCase):
    def test_unknown_method(self):
        with self.assertRaises(ConfigError):
            load_config(None, {"bloch": {"method": "lanczos"}})

    def test_unknown_section(self):
        with self.assertRaises(ConfigError):
            load_config(None, {"plots": {}})

    def test_negative_tolerance(self):
        with self.assertRaises(ConfigError):
            load_config(None, {"tolerances": {"bisect_tol": -1.0}})

    def test_boundary(self):
        with self.assertRaises(ConfigError):
            load_config(None, {"load": {"boundary": "traction"}})

    def test_no_mesh(self):
        with self.assertRaises(ConfigError):
            load_config(None, {"mesh": {"file": "", "generator": None}})

    def test_bad_tiling(self):
        with self.assertRaises(ConfigError):
            load_config(None, {"mesh": {"tiling": [0, 1]}})

    def test_material_ids(self):
        with self.assertRaises(ConfigError):
            load_config(None, {"materials": {"matrix": {"kind": "neo_hookean"}}})

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config("/does/not/exist.json")

    def test_unparsable_file(self):
        with TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "bad.json")
            with open(path, "w") as f:
                f.write("{not json")
            with self.assertRaises(ConfigError):
                load_config(path)


class TestRunConfig(TestCase):
    def test_store_round_trip(self):
        with TemporaryDirectory() as tmp:
            config = load_config(None, small_config(tmp))
            path = os.path.join(tmp, "run.json")
            config.store(path)
            with open(path) as f:
                self.assertEqual(json.load(f)["bloch"]["n_coarse"], 4)
            self.assertEqual(load_config(path), config)

    def test_relative_mesh_file(self):
        with TemporaryDirectory() as tmp:
            with open(os.path.join(tmp, "run.json"), "w") as f:
                json.dump({"mesh": {"file": "cell.mesh"}}, f)
            config = load_config(os.path.join(tmp, "run.json"))
            with mock.patch(f"{PATCH_MODULE}.read_mesh") as read_mesh:
                config.build_mesh()
            read_mesh.assert_called_once_with(os.path.join(tmp, "cell.mesh"), None)

    def test_build_problem(self):
        with TemporaryDirectory() as tmp:
            config = load_config(None, small_config(tmp))
        problem = config.build_problem()
        self.assertEqual(len(problem.mesh.elements), 9)
        self.assertIsInstance(problem.boundary, PeriodicBoundary)
        self.assertEqual(problem.settings.tol, 1e-10)
        linear = RunConfig.from_dict(dict(config.to_dict(), load={"boundary": "linear"}))
        self.assertIsInstance(linear.build_problem().boundary, LinearBoundary)

    def test_tiling_and_fixed_node(self):
        with TemporaryDirectory() as tmp:
            overrides = small_config(tmp)
        overrides["mesh"].update({"tiling": [2, 1], "fixed_node": 0})
        mesh = load_config(None, overrides).build_mesh()
        self.assertEqual(len(mesh.elements), 18)
        self.assertEqual(mesh.fixed_node, 0)
        self.assertIsNotNone(mesh.pairing)

    def test_missing_material(self):
        overrides = {"mesh": {"generator": {"radius": 0.3, "feature": "inclusion",
                                            "target_elements": 40}}}
        with self.assertRaises(ConfigError):
            load_config(None, overrides).build_problem()

    def test_bad_generator(self):
        with self.assertRaises(ConfigError):
            load_config(None, {"mesh": {"generator": {"spokes": 3}}}).build_mesh()

    def test_stability_settings(self):
        with TemporaryDirectory() as tmp:
            config = load_config(None, small_config(tmp))
        settings = config.stability_settings()
        self.assertEqual(settings.method, "nullspace")
        self.assertEqual(settings.threads, 1)
        self.assertEqual(settings.grid.n_coarse, 4)
        self.assertAlmostEqual(settings.angle_step, pi / 720)
        self.assertEqual(settings.stress_tol, 1e-8)
        self.assertEqual(config.stability_settings("all", 0).method, "nullspace")
        with mock.patch(f"{PATCH_MODULE}.os.cpu_count", return_value=6):
            self.assertEqual(config.stability_settings(threads=0).threads, 6)

    def test_load_path(self):
        path = load_config().load_path()
        self.assertEqual(path.control, "strain_driven")
        self.assertEqual(len(path.schedule()), 21)

    def test_output_dir(self):
        config = load_config()
        with mock.patch(f"{PATCH_MODULE}.RESULTS_PATH", "/tmp/rve"):
            self.assertEqual(config.output_dir, "/tmp/rve")
        config.output["dir"] = "out"
        self.assertEqual(config.output_dir, "out")
