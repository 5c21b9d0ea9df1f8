import argparse
import sys

from ovos_utils.log import LOG, init_service_logger

from rve_stability.config import load_config
from rve_stability.errors import RveError
from rve_stability.service import AnalysisService

COMMANDS = ("mesh-info", "homogenize", "stress-drive", "stability", "sweep-compare")
ANALYSIS_OF = {"mesh-info": "mesh_info", "homogenize": "homogenize",
               "stress-drive": "stress_drive", "stability": "stability",
               "sweep-compare": "sweep_compare"}


def on_ready():
    LOG.info("rve-stability run complete")


def on_stopping():
    LOG.info('rve-stability is shutting down...')


def on_error(e='Unknown'):
    LOG.error(f'rve-stability failed: {repr(e)}')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rve-stability",
        description="Finite strain homogenization and multiscale stability of periodic cells")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("mesh", nargs="?", default=None,
                        help="mesh file (mesh-info only)")
    parser.add_argument("--config", help="run configuration file (JSON or YAML)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--method", choices=("cond1", "cond2", "nullspace", "all"),
                        help="Bloch eigenvalue method")
    parser.add_argument("--threads", type=int, help="k-sweep worker threads")
    parser.add_argument("--deterministic", action="store_true",
                        help="single-threaded, bit-reproducible output")
    parser.add_argument("--log-level", default="INFO",
                        choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    return parser


def main(argv=None, ready_hook=on_ready, error_hook=on_error,
         stopping_hook=on_stopping) -> int:
    args = build_parser().parse_args(argv)
    init_service_logger("rve_stability")
    LOG.set_level(args.log_level)
    threads = 1 if args.deterministic else args.threads
    config = None
    try:
        if args.config or args.command != "mesh-info":
            config = load_config(args.config, {"analysis": ANALYSIS_OF[args.command]})
    except RveError as e:
        LOG.error(e.describe())
        error_hook(e)
        return e.exit_code
    service = AnalysisService(ready_hook=ready_hook, error_hook=error_hook,
                              stopping_hook=stopping_hook)
    code = service.run(args.command, config, args.out, args.method, threads, args.mesh)
    service.stop()
    return code


if __name__ == "__main__":
    sys.exit(main())
