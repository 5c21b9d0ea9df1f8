"""
Analyses behind the command line subcommands. Each returns a RunSummary
and writes its files to the output directory.
"""
import os
from typing import Optional

import numpy as np
from ovos_utils.log import LOG

from rve_stability.bloch import METHODS
from rve_stability.config import RunConfig
from rve_stability.continuation import PathRunner, compare_methods, run_path
from rve_stability.errors import ConfigError, SolverError
from rve_stability.homogenizer import homogenize_path
from rve_stability.mesh import read_mesh, write_mesh
from rve_stability.results import (RunSummary, Stopwatch, format_macro_table,
                                   macro_state_dict, quadrature_metadata, report_dict,
                                   write_b_alpha_csv, write_csv, write_history_csv,
                                   write_mode_csv, write_stress_path_csv, write_summary,
                                   write_surface_csv)


def _summary(command: str, config: Optional[RunConfig], mesh=None) -> RunSummary:
    summary = RunSummary(command=command, config=config.to_dict() if config else {})
    if mesh is not None:
        summary.quadrature = quadrature_metadata(sorted({el.kind for el in mesh.elements}))
    return summary


def cmd_mesh_info(config: Optional[RunConfig] = None, mesh_file: Optional[str] = None,
                  out_dir: Optional[str] = None) -> RunSummary:
    """Node and element counts, pairing size, corner pairs and lattice duality."""
    if mesh_file:
        mesh = read_mesh(mesh_file)
    elif config is not None:
        mesh = config.build_mesh()
    else:
        raise ConfigError("mesh-info needs a mesh file or a config")
    pairing = mesh.pairing
    ids = mesh.node_ids
    corners = [(int(ids[a]), int(ids[b]), list(c)) for a, b, c in pairing.corner_pairs()]
    summary = _summary("mesh-info", config, mesh)
    summary.final = {
        "nodes": mesh.n_nodes,
        "elements": len(mesh.elements),
        "element_kinds": sorted({el.kind for el in mesh.elements}),
        "materials": mesh.materials,
        "m": pairing.m,
        "corner_pairs": corners,
        "fixed_node": int(ids[mesh.fixed_node]),
        "a1": mesh.lattice.a1.tolist(),
        "a2": mesh.lattice.a2.tolist(),
        "duality_residual": mesh.lattice.duality_residual(),
        "volume": mesh.volume,
    }
    LOG.info(f"{mesh.n_nodes} nodes, {len(mesh.elements)} elements, m = {pairing.m}, "
             f"{len(corners)} corner pairs, duality residual "
             f"{summary.final['duality_residual']:.3e}")
    if out_dir:
        write_summary(summary, out_dir, "mesh_info.json")
    return summary


def cmd_homogenize(config: RunConfig, out_dir: Optional[str] = None) -> RunSummary:
    """Strain-driven homogenization at the configured macroscopic F."""
    out_dir = out_dir or config.output_dir
    clock = Stopwatch()
    problem = config.build_problem()
    clock.lap("setup")
    F = np.asarray(config.load["F"], dtype=float)
    if F.shape != (4,):
        raise ConfigError("load.F must hold (F11, F21, F12, F22)")
    solution, records = homogenize_path(problem, F, int(config.load.get("n_steps", 1)))
    clock.lap("solve")
    final = records[-1]
    summary = _summary("homogenize", config, problem.mesh)
    summary.records = [macro_state_dict(s) for s in records]
    summary.final = macro_state_dict(final)
    summary.statistics = {"steps": len(records), "last_iterations": solution.iterations,
                          "residuals": solution.residuals, "min_pivot": solution.min_pivot,
                          "max_pivot": solution.max_pivot}
    summary.timing = clock.timing
    LOG.info("homogenized response\n" + format_macro_table(final))
    summary.files.append(write_csv(
        os.path.join(out_dir, "homogenize.csv"),
        ("step", "F11", "F21", "F12", "F22", "P11", "P21", "P12", "P22", "psi",
         "iterations", "min_pivot"),
        ([i + 1, *s.F, *s.P, s.psi, s.iterations, s.min_pivot]
         for i, s in enumerate(records))))
    if config.output.get("write_mesh"):
        summary.files.append(write_mesh(problem.mesh, os.path.join(out_dir, "mesh.txt")))
    write_summary(summary, out_dir)
    return summary


def cmd_stress_drive(config: RunConfig, out_dir: Optional[str] = None) -> RunSummary:
    """
    Ramp the principal Kirchhoff stress target and record the response.
    Every step is checked for stability, the ramp stops at the first
    bifurcation after bracketing it.
    """
    out_dir = out_dir or config.output_dir
    path = config.load_path()
    if not path.stress_driven:
        raise ConfigError("stress-drive needs load.control = 'stress_driven'")
    clock = Stopwatch()
    problem = config.build_problem()
    runner = PathRunner(problem, path, config.stability_settings(threads=1))
    rows, committed, summary = [], None, _summary("stress-drive", config, problem.mesh)
    last_check = None
    for lam in path.schedule():
        try:
            point = runner.advance(committed, lam)
        except SolverError as e:
            summary.status = "failed"
            summary.message = f"stress loop failed at lambda={lam:.6g}: {e}"
            LOG.error(summary.message)
            break
        check = runner.check(point)
        rows.append({"lambda": lam, "F_hat": point.stress.F_hat.tolist(),
                     "tau_principal": point.stress.tau_principal.tolist(),
                     "P": point.state.P.tolist(), "psi": point.state.psi,
                     "beta_min": check.surface.beta_min, "B": check.rank1.B,
                     "min_pivot": point.state.min_pivot})
        if check.unstable:
            lo, hi = (runner.bisect(last_check, check) if last_check is not None
                      else (check, check))
            report = runner.report(lo, hi)
            summary.status = "bifurcation"
            summary.report = report_dict(report)
            summary.message = (f"bifurcation at lambda_c={report.lam_c:.6g} "
                               f"({report.wavelength_class}), stress ramp stopped")
            LOG.warning(summary.message)
            break
        committed = point
        last_check = check
    clock.lap("solve")
    summary.records = rows
    if committed is not None:
        summary.final = macro_state_dict(committed.state)
    summary.timing = clock.timing
    summary.files.append(write_stress_path_csv(os.path.join(out_dir, "stress_path.csv"),
                                               rows))
    write_summary(summary, out_dir)
    return summary


def _write_stability_files(result, problem, out_dir: str, summary: RunSummary,
                           prefix: str = ""):
    summary.files.append(write_history_csv(os.path.join(out_dir, f"{prefix}history.csv"),
                                           result.history))
    rep = result.report
    if rep is None:
        return
    summary.files.append(write_surface_csv(os.path.join(out_dir, f"{prefix}surface.csv"),
                                           rep.surface))
    summary.files.append(write_mode_csv(os.path.join(out_dir, f"{prefix}mode.csv"),
                                        problem.mesh, rep.surface.mode))
    summary.files.append(write_b_alpha_csv(os.path.join(out_dir, f"{prefix}b_alpha.csv"),
                                           rep.rank1))


def cmd_stability(config: RunConfig, out_dir: Optional[str] = None,
                  method: Optional[str] = None, threads: Optional[int] = None) -> RunSummary:
    """Load path with Bloch and rank-one monitoring up to the first bifurcation."""
    method = method or config.bloch["method"]
    if method == "all":
        return cmd_sweep_compare(config, out_dir, threads)
    out_dir = out_dir or config.output_dir
    clock = Stopwatch()
    problem = config.build_problem()
    clock.lap("setup")
    result = run_path(problem, config.load_path(), config.stability_settings(method, threads))
    clock.lap("path")
    summary = _summary("stability", config, problem.mesh)
    summary.status = result.status
    summary.message = result.message
    summary.records = [rec.as_row() for rec in result.history]
    summary.report = report_dict(result.report)
    if result.last is not None:
        summary.final = macro_state_dict(result.last.state)
    summary.statistics = {"method": method, "steps": len(result.history),
                          "ordering_violations": sum(not r.ordering_ok
                                                     for r in result.history)}
    summary.timing = clock.timing
    _write_stability_files(result, problem, out_dir, summary)
    if result.report is not None:
        LOG.info(f"lambda_c = {result.report.lam_c:.4f} "
                 f"({result.report.wavelength_class})")
    else:
        LOG.info(result.message)
    write_summary(summary, out_dir)
    return summary


def cmd_sweep_compare(config: RunConfig, out_dir: Optional[str] = None,
                      threads: Optional[int] = None) -> RunSummary:
    """The same load path evaluated with every Bloch method."""
    out_dir = out_dir or config.output_dir
    clock = Stopwatch()
    problem = config.build_problem()
    results = compare_methods(problem, config.load_path(),
                              config.stability_settings(threads=threads), METHODS)
    clock.lap("paths")
    summary = _summary("sweep-compare", config, problem.mesh)
    lam_c = {m: (r.report.lam_c if r.report else None) for m, r in results.items()}
    summary.final = {"lambda_c": lam_c,
                     "status": {m: r.status for m, r in results.items()}}
    summary.report = {m: report_dict(r.report) for m, r in results.items()}
    summary.timing = clock.timing
    found = [v for v in lam_c.values() if v is not None]
    tol = config.tolerances["bisect_tol"]
    if found and max(found) - min(found) > 2 * tol:
        summary.status = "mismatch"
        LOG.warning(f"Bloch methods disagree on lambda_c: {lam_c}")
    for m, r in results.items():
        _write_stability_files(r, problem, out_dir, summary, prefix=f"{m}_")
    LOG.info(f"lambda_c per method: {lam_c}")
    write_summary(summary, out_dir, "sweep_compare.json")
    return summary
