import json
import os
from tempfile import TemporaryDirectory
from unittest import TestCase, mock

from ovos_utils.process_utils import ProcessState

from rve_stability.__main__ import build_parser, main
from rve_stability.errors import MeshParseError, NewtonDivergence
from rve_stability.results import RunSummary
from rve_stability.service import AnalysisService
from .mocks import AnyCallable, small_config

PATCH_MODULE = "rve_stability.service"
MAIN_MODULE = "rve_stability.__main__"


class TestAnalysisService(TestCase):
    def test_hooks(self):
        ready, error = mock.Mock(), mock.Mock()
        service = AnalysisService(ready_hook=ready, error_hook=error)
        with mock.patch(f"{PATCH_MODULE}.cmd_homogenize",
                        return_value=RunSummary("homogenize")) as cmd:
            code = service.run("homogenize", "config", "out")
        self.assertEqual(code, 0)
        cmd.assert_called_once_with("config", "out")
        ready.assert_called_once()
        error.assert_not_called()
        self.assertTrue(service.is_alive())
        self.assertEqual(service.summary.command, "homogenize")

    def test_error_exit_codes(self):
        error = mock.Mock()
        service = AnalysisService(error_hook=error)
        with mock.patch(f"{PATCH_MODULE}.cmd_stability",
                        side_effect=NewtonDivergence("stuck", 3, 1.0)):
            self.assertEqual(service.run("stability", None), 6)
        error.assert_called_once()
        with mock.patch(f"{PATCH_MODULE}.cmd_mesh_info",
                        side_effect=MeshParseError("bad", 2, 3)):
            self.assertEqual(service.run("mesh-info", None, mesh_file="x.mesh"), 3)
        with mock.patch(f"{PATCH_MODULE}.cmd_stress_drive", side_effect=KeyError("F")):
            self.assertEqual(service.run("stress-drive", None), 1)
        self.assertEqual(service.run("plot", None), 1)

    def test_stop(self):
        service = AnalysisService()
        service.stop()
        self.assertEqual(service.status.state, ProcessState.STOPPING)


@mock.patch(f"{MAIN_MODULE}.init_service_logger")
class TestMain(TestCase):
    def test_parser(self, _):
        args = build_parser().parse_args(["stability", "--method", "cond2",
                                          "--threads", "4"])
        self.assertEqual(args.command, "stability")
        self.assertEqual(args.method, "cond2")
        self.assertEqual(args.threads, 4)
        with self.assertRaises(SystemExit):
            build_parser().parse_args(["stability", "--method", "lanczos"])

    def test_deterministic(self, _):
        with mock.patch(f"{PATCH_MODULE}.cmd_stability",
                        return_value=RunSummary("stability")) as cmd:
            code = main(["stability", "--deterministic", "--method", "cond1"])
        self.assertEqual(code, 0)
        config, out_dir, method, threads = cmd.call_args[0]
        self.assertEqual(config.analysis, "stability")
        self.assertEqual((out_dir, method, threads), (None, "cond1", 1))

    def test_mesh_info_without_config(self, _):
        with mock.patch(f"{PATCH_MODULE}.cmd_mesh_info",
                        return_value=RunSummary("mesh-info")) as cmd:
            self.assertEqual(main(["mesh-info", "cell.mesh"]), 0)
        cmd.assert_called_once_with(None, "cell.mesh", None)

    def test_config_error(self, _):
        error = mock.Mock()
        self.assertEqual(main(["homogenize", "--config", "/does/not/exist.json"],
                              error_hook=error), 2)
        error.assert_called_once()

    def test_hooks_are_callables(self, _):
        with mock.patch(f"{MAIN_MODULE}.AnalysisService") as service:
            service.return_value.run.return_value = 0
            main(["homogenize"])
        service.assert_called_once_with(ready_hook=AnyCallable(), error_hook=AnyCallable(),
                                        stopping_hook=AnyCallable())
        service.return_value.stop.assert_called_once()

    def test_mesh_info_end_to_end(self, _):
        with TemporaryDirectory() as tmp:
            cfg = os.path.join(tmp, "run.json")
            with open(cfg, "w") as f:
                json.dump(small_config(tmp), f)
            self.assertEqual(main(["mesh-info", "--config", cfg, "--out", tmp]), 0)
            with open(os.path.join(tmp, "mesh_info.json")) as f:
                summary = json.load(f)
        self.assertEqual(summary["command"], "mesh-info")
        self.assertEqual(summary["final"]["elements"], 9)
        self.assertEqual(summary["final"]["m"], 7)
        self.assertEqual(len(summary["final"]["corner_pairs"]), 3)
