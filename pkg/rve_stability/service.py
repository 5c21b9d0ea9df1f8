from typing import Optional

from ovos_utils.log import LOG
from ovos_utils.process_utils import ProcessState, ProcessStatus, StatusCallbackMap

from rve_stability.commands import (cmd_homogenize, cmd_mesh_info, cmd_stability,
                                    cmd_stress_drive, cmd_sweep_compare)
from rve_stability.config import RunConfig
from rve_stability.errors import RveError
from rve_stability.results import RunSummary


def on_started():
    LOG.info('Analysis is starting up.')


def on_alive():
    LOG.info('Analysis inputs are loaded.')


def on_ready():
    LOG.info('Analysis finished.')


def on_error(e='Unknown'):
    LOG.error(f'Analysis failed ({e})')


def on_stopping():
    LOG.info('Analysis is shutting down...')


class AnalysisService:
    """Runs one subcommand and reports its lifecycle through status hooks."""

    def __init__(self, alive_hook=on_alive, started_hook=on_started,
                 ready_hook=on_ready, error_hook=on_error,
                 stopping_hook=on_stopping):
        callbacks = StatusCallbackMap(on_started=started_hook,
                                      on_alive=alive_hook,
                                      on_ready=ready_hook,
                                      on_error=error_hook,
                                      on_stopping=stopping_hook)
        self.status = ProcessStatus('rve_stability', callback_map=callbacks)
        self.summary: Optional[RunSummary] = None

    def run(self, command: str, config: Optional[RunConfig], out_dir: Optional[str] = None,
            method: Optional[str] = None, threads: Optional[int] = None,
            mesh_file: Optional[str] = None) -> int:
        """
        Execute a subcommand.
        @return: process exit code, 0 on success
        """
        self.status.set_started()
        try:
            self.status.set_alive()
            if command == "mesh-info":
                self.summary = cmd_mesh_info(config, mesh_file, out_dir)
            elif command == "homogenize":
                self.summary = cmd_homogenize(config, out_dir)
            elif command == "stress-drive":
                self.summary = cmd_stress_drive(config, out_dir)
            elif command == "stability":
                self.summary = cmd_stability(config, out_dir, method, threads)
            elif command == "sweep-compare":
                self.summary = cmd_sweep_compare(config, out_dir, threads)
            else:
                raise ValueError(f"unknown command {command}")
        except RveError as e:
            LOG.error(e.describe())
            self.status.set_error(e.describe())
            return e.exit_code
        except Exception as e:
            LOG.exception(f"unexpected failure in {command}")
            self.status.set_error(repr(e))
            return 1
        self.status.set_ready()
        return 0

    def is_alive(self) -> bool:
        return self.status.state >= ProcessState.ALIVE

    def stop(self):
        self.status.set_stopping()
