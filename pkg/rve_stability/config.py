"""
Run configuration: a JSON (or YAML) file merged over the packaged defaults.
"""
import copy
import os
from dataclasses import dataclass, field
from math import pi
from typing import Dict, Optional

from ovos_config.models import LocalConf
from ovos_utils.log import LOG

from rve_stability.bloch import METHODS, KGridSpec
from rve_stability.constants import DEFAULT_CONFIG_PATH, RESULTS_PATH, STRESS_TOL
from rve_stability.continuation import LoadPath, StabilitySettings
from rve_stability.errors import ConfigError
from rve_stability.homogenizer import (LinearBoundary, NewtonSettings, PeriodicBoundary,
                                       RveProblem)
from rve_stability.materials import Material, material_from_config
from rve_stability.mesh import RveMesh, generate_hole_mesh, read_mesh, tile_mesh

ANALYSES = ("mesh_info", "homogenize", "stress_drive", "stability", "sweep_compare")
BOUNDARIES = {"periodic": PeriodicBoundary, "linear": LinearBoundary}
SECTIONS = ("analysis", "mesh", "materials", "load", "bloch", "rank1", "tolerances",
            "output")


def default_config() -> dict:
    return dict(LocalConf(DEFAULT_CONFIG_PATH))


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "materials":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    analysis: str
    mesh: Dict
    materials: Dict[str, Dict]
    load: Dict
    bloch: Dict
    rank1: Dict
    tolerances: Dict
    output: Dict
    base_dir: str = field(default=".", compare=False)

    def __post_init__(self):
        if self.analysis not in ANALYSES:
            raise ConfigError(f"analysis must be one of {ANALYSES}, got '{self.analysis}'")
        if not self.mesh.get("file") and not self.mesh.get("generator"):
            raise ConfigError("mesh needs either 'file' or 'generator'")
        method = self.bloch.get("method")
        if method not in METHODS + ("all",):
            raise ConfigError(f"unknown Bloch method '{method}'")
        if self.load.get("boundary", "periodic") not in BOUNDARIES:
            raise ConfigError(f"unknown boundary '{self.load.get('boundary')}'")
        for key, value in self.tolerances.items():
            if value is not None and value <= 0:
                raise ConfigError(f"tolerance '{key}' must be positive, got {value}")
        if not self.materials:
            raise ConfigError("no materials defined")
        for mid in self.materials:
            try:
                int(mid)
            except ValueError:
                raise ConfigError(f"material id '{mid}' is not an integer")
        tiling = self.mesh.get("tiling") or [1, 1]
        if len(tiling) != 2 or min(tiling) < 1:
            raise ConfigError(f"tiling must be two positive counts, got {tiling}")

    @classmethod
    def from_dict(cls, data: dict, base_dir: str = ".") -> "RunConfig":
        merged = _merge(default_config(), data)
        unknown = set(merged) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        try:
            return cls(**{k: merged[k] for k in SECTIONS}, base_dir=base_dir)
        except (TypeError, AttributeError) as e:
            raise ConfigError(f"malformed configuration: {e}")

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in SECTIONS}

    def store(self, path: str):
        conf = LocalConf(path)
        conf.clear()
        conf.update(self.to_dict())
        conf.store(path)

    # builders
    def build_materials(self) -> Dict[int, Material]:
        return {int(mid): material_from_config(cfg) for mid, cfg in self.materials.items()}

    def build_mesh(self) -> RveMesh:
        tol = self.mesh.get("pairing_tol")
        if self.mesh.get("file"):
            path = self.mesh["file"]
            if not os.path.isabs(path):
                path = os.path.join(self.base_dir, path)
            mesh = read_mesh(path, tol)
        else:
            gen = dict(self.mesh["generator"])
            try:
                mesh = generate_hole_mesh(**gen)
            except TypeError as e:
                raise ConfigError(f"bad mesh generator parameters: {e}")
        n1, n2 = self.mesh.get("tiling") or (1, 1)
        if (n1, n2) != (1, 1):
            mesh = tile_mesh(mesh, int(n1), int(n2))
        if self.mesh.get("fixed_node") is not None:
            mesh = mesh.with_fixed_node(int(self.mesh["fixed_node"]))
        return mesh.paired(tol) if mesh.pairing is None else mesh

    def newton_settings(self) -> NewtonSettings:
        t = self.tolerances
        return NewtonSettings(tol=t["newton"], max_iterations=int(t["max_iterations"]),
                              singular_ratio=t["singular_pivot"])

    def build_problem(self, mesh: Optional[RveMesh] = None) -> RveProblem:
        mesh = mesh or self.build_mesh()
        materials = self.build_materials()
        missing = set(mesh.materials) - set(materials)
        if missing:
            raise ConfigError(f"mesh references undefined material ids {sorted(missing)}")
        boundary = BOUNDARIES[self.load.get("boundary", "periodic")](mesh)
        return RveProblem(mesh=mesh, materials=materials, boundary=boundary,
                          settings=self.newton_settings())

    def load_path(self) -> LoadPath:
        ld = self.load
        return LoadPath(control=ld["control"], kind=ld.get("kind", "constrained"),
                        theta=float(ld.get("theta", 0.0)), phi=float(ld.get("phi", pi / 2)),
                        start=float(ld["lambda_start"]), step=float(ld["lambda_step"]),
                        stop=float(ld["lambda_max"]))

    def stability_settings(self, method: Optional[str] = None,
                           threads: Optional[int] = None) -> StabilitySettings:
        b, r, t = self.bloch, self.rank1, self.tolerances
        method = method or b["method"]
        if method == "all":
            method = "nullspace"
        n_threads = threads if threads is not None else int(b.get("threads") or 0)
        if n_threads <= 0:
            n_threads = os.cpu_count() or 1
        return StabilitySettings(
            method=method, include_metric=bool(b.get("include_metric", False)),
            grid=KGridSpec(n_coarse=int(b["n_coarse"]), n_refined=int(b["n_refined"]),
                           zone=float(b["zone"])),
            threads=n_threads, bisect_tol=float(t["bisect_tol"]),
            angle_step=pi / int(r["angle_divisions"]), compat=bool(r.get("compat", False)),
            check_interval=int(b.get("check_interval", 1)),
            prefilter_margin=float(b.get("prefilter_margin", 1e-3)),
            multiplicity_tol=float(t["multiplicity_tol"]),
            stress_tol=float(t.get("stress_tol", STRESS_TOL)))

    @property
    def output_dir(self) -> str:
        return self.output.get("dir") or RESULTS_PATH


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """
    Read a run configuration file and merge it over the packaged defaults.
    @raise ConfigError: missing, unreadable or invalid file
    """
    data, base_dir = {}, "."
    if path:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            data = dict(LocalConf(path))
        except Exception as e:
            raise ConfigError(f"could not parse config file {path}: {e}")
        if not data and os.path.getsize(path) > 0:
            raise ConfigError(f"could not parse config file {path}")
        base_dir = os.path.dirname(os.path.abspath(path))
        LOG.debug(f"loaded config {path}")
    if overrides:
        data = _merge(data, overrides)
    return RunConfig.from_dict(data, base_dir)
