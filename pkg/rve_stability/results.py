"""
Result files: run summary JSON, plot-ready CSVs and human-readable tables.

Machine-readable floats are written with 17 significant digits, human tables
with 4 decimals.
"""
import csv
import json
import os
import platform
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from ovos_utils.log import LOG

from rve_stability import __version__
from rve_stability.elements import quadrature

FLOAT_FORMAT = "%.17g"


@dataclass
class RunSummary:
    command: str
    status: str = "ok"
    message: str = ""
    config: Dict = field(default_factory=dict)
    records: List[Dict] = field(default_factory=list)
    final: Dict = field(default_factory=dict)
    report: Optional[Dict] = None
    statistics: Dict = field(default_factory=dict)
    timing: Dict[str, float] = field(default_factory=dict)
    files: List[str] = field(default_factory=list)
    quadrature: Dict[str, Dict] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "tool": "rve-stability",
            "version": __version__,
            "python": platform.python_version(),
            "command": self.command,
            "status": self.status,
            "message": self.message,
            "config": self.config,
            "records": self.records,
            "final": self.final,
            "report": self.report,
            "statistics": self.statistics,
            "timing": self.timing,
            "quadrature": self.quadrature,
            "files": self.files,
        }


def _plain(value):
    """JSON-compatible copy of numpy containers and scalars."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    LOG.debug(f"wrote {path}")
    return path


def write_summary(summary: RunSummary, out_dir: str, name: str = "summary.json") -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    summary.files.append(path)
    with open(path, "w") as f:
        json.dump(_plain(summary.to_dict()), f, indent=2)
    LOG.info(f"summary written to {path}")
    return path


def write_surface_csv(path: str, surface) -> str:
    """Rows (k1, k2, beta_k) in grid order."""
    return write_csv(path, ("k1", "k2", "beta"),
                     ((float(k[0]), float(k[1]), float(b))
                      for k, b in zip(surface.kpoints, surface.betas)))


def write_mode_csv(path: str, mesh, mode: np.ndarray) -> str:
    """Rows (node, Re_ux, Re_uy, Im_ux, Im_uy) with file node ids."""
    v = np.asarray(mode).reshape(-1, 2)
    return write_csv(path, ("node", "Re_ux", "Re_uy", "Im_ux", "Im_uy"),
                     ((int(nid), float(u.real[0]), float(u.real[1]),
                       float(u.imag[0]), float(u.imag[1]))
                      for nid, u in zip(mesh.node_ids, v)))


def write_history_csv(path: str, history) -> str:
    rows = [rec.as_row() for rec in history]
    header = list(rows[0]) if rows else ["lambda", "beta_min", "k1", "k2", "B"]
    return write_csv(path, header, ([r[h] for h in header] for r in rows))


def write_stress_path_csv(path: str, rows: List[Dict]) -> str:
    """
    Per-step (lambda, F11, F22, F12, tau'11, tau'12, tau'22, P11, P21, P12, P22)
    followed by the stability columns beta_min, B and the smallest pivot.
    """
    header = ("lambda", "F11", "F22", "F12", "tau11", "tau12", "tau22",
              "P11", "P21", "P12", "P22", "beta_min", "B", "min_pivot")
    return write_csv(path, header, ([r["lambda"], *r["F_hat"], *r["tau_principal"], *r["P"],
                                     r.get("beta_min"), r.get("B"), r.get("min_pivot")]
                                    for r in rows))


QUADRATURE_TAGS = {"Q4": "Q4_disp", "Q9": "Q9P3_mixed"}


def quadrature_metadata(kinds) -> Dict[str, Dict]:
    """Gauss rule used by each element kind of the mesh, for the run summary."""
    meta = {}
    for kind in kinds:
        n = len(quadrature(kind).weights)
        per_axis = int(round(n ** 0.5))
        meta[QUADRATURE_TAGS.get(kind, kind)] = {"rule": f"gauss {per_axis}x{per_axis}",
                                                 "points": n}
    return meta


def write_b_alpha_csv(path: str, rank1) -> str:
    return write_csv(path, ("alpha", "B_alpha"),
                     zip(map(float, rank1.alphas), map(float, rank1.B_alpha)))


def macro_state_dict(state) -> Dict:
    return {"F": state.F.tolist(), "P": state.P.tolist(), "A": state.A.tolist(),
            "psi": float(state.psi), "P_average": state.P_avg.tolist(),
            "tau": state.tau.tolist(), "iterations": int(state.iterations),
            "min_pivot": float(state.min_pivot)}


def format_macro_table(state) -> str:
    """P, A and psi at 4 decimals, laid out as 4-vector, 4x4 matrix and scalar."""
    lines = ["P = [" + ", ".join(f"{x:.4f}" for x in state.P) + "]", "A ="]
    lines += ["  [" + ", ".join(f"{x:9.4f}" for x in row) + "]" for row in state.A]
    lines.append(f"psi = {state.psi:.4f}")
    return "\n".join(lines)


def report_dict(report) -> Dict:
    if report is None:
        return None
    return {
        "lambda_c": report.lam_c,
        "bracket": list(report.bracket),
        "wavelength_class": report.wavelength_class,
        "classes": report.classes,
        "multiplicity": report.multiplicity,
        "critical_k": [list(k) for k in report.critical_k],
        "k_star": list(report.k_star),
        "beta_c": report.beta_c,
        "B_c": report.B_c,
        "B_bracket": list(report.B_bracket),
        "beta_crossed": report.beta_crossed,
        "B_crossed": report.B_crossed,
        "discontinuity": report.discontinuity,
        "n_real_modes": len(report.modes),
    }


class Stopwatch:
    """Named wall-clock intervals collected into a summary."""

    def __init__(self):
        self.timing: Dict[str, float] = {}
        self._t0 = time.perf_counter()

    def lap(self, name: str):
        now = time.perf_counter()
        self.timing[name] = now - self._t0
        self._t0 = now
