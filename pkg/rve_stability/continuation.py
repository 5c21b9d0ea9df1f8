"""
Load path driver with stability monitoring.

Each accepted step is followed by a Bloch sweep (min beta over the wavevector
grid) and the rank-one check of the homogenized tangent. The first step where
either indicator turns negative is bracketed with the last stable step and
refined by bisection; midpoints always restart from the committed state of the
lower bracket.
"""
from dataclasses import dataclass, field, replace
from math import pi
from typing import Dict, List, Optional, Tuple

import numpy as np
from ovos_utils.log import LOG

from rve_stability.bloch import (BlochAnalyzer, BlochSurface, KGridSpec, build_kgrid,
                                 critical_wavevectors, neighborhood, origin_samples,
                                 recover_real_mode, sweep)
from rve_stability.constants import (ANGLE_STEP, BETA_ROUNDOFF_GUARD, BISECT_TOL,
                                     MULTIPLICITY_TOL, PREFILTER_MARGIN, STRESS_TOL)
from rve_stability.errors import (ConfigError, NewtonDivergence, SolverError,
                                  StressDriverDivergence)
from rve_stability.homogenizer import MacroState, RveProblem, RveSolution, homogenize
from rve_stability.materials import to_voigt
from rve_stability.rank1 import Rank1Report, classify_discontinuity, rank1_indicator
from rve_stability.stress_driver import (StressDrivenResult, StressTarget, rotation,
                                         solve_stress_driven)

STRAIN_KINDS = ("constrained", "biaxial")


@dataclass(frozen=True)
class LoadPath:
    """
    control: 'strain_driven' (kind 'constrained' F = Q diag(1, lam) Q^T or
    'biaxial' F = lam I) or 'stress_driven' (principal Kirchhoff target
    (lam, phi, theta)). lam runs from start to stop in increments of step.
    """
    control: str = "strain_driven"
    kind: str = "constrained"
    theta: float = 0.0
    phi: float = pi / 2
    start: float = 1.0
    step: float = -0.01
    stop: float = 0.8

    def __post_init__(self):
        if self.control not in ("strain_driven", "stress_driven"):
            raise ConfigError(f"unknown load control '{self.control}'")
        if self.control == "strain_driven" and self.kind not in STRAIN_KINDS:
            raise ConfigError(f"unknown strain path '{self.kind}', expected {STRAIN_KINDS}")
        if self.step == 0 or np.sign(self.stop - self.start) != np.sign(self.step):
            raise ConfigError(f"lambda schedule {self.start} -> {self.stop} with step "
                              f"{self.step} is not monotone")

    @property
    def stress_driven(self) -> bool:
        return self.control == "stress_driven"

    def schedule(self) -> List[float]:
        n = int(np.floor((self.stop - self.start) / self.step + 1e-9))
        lams = [self.start + j * self.step for j in range(n + 1)]
        if abs(lams[-1] - self.stop) > 1e-12 * max(1.0, abs(self.stop)):
            lams.append(self.stop)
        return lams

    def F(self, lam: float) -> np.ndarray:
        """Macroscopic deformation gradient of a strain-driven path."""
        if self.kind == "biaxial":
            return np.array([lam, 0.0, 0.0, lam])
        Q = rotation(self.theta)
        return to_voigt(Q @ np.diag([1.0, lam]) @ Q.T)

    def target(self, lam: float) -> StressTarget:
        return StressTarget(lam=lam, phi=self.phi, theta=self.theta)


@dataclass
class StabilitySettings:
    method: str = "nullspace"
    include_metric: bool = False
    grid: KGridSpec = field(default_factory=KGridSpec)
    threads: int = 1
    bisect_tol: float = BISECT_TOL
    angle_step: float = ANGLE_STEP
    compat: bool = False
    check_interval: int = 1
    prefilter_margin: float = PREFILTER_MARGIN
    multiplicity_tol: float = MULTIPLICITY_TOL
    stress_tol: float = STRESS_TOL
    max_cutbacks: int = 6


@dataclass(eq=False)
class PathPoint:
    lam: float
    state: MacroState
    solution: RveSolution
    stress: Optional[StressDrivenResult] = None


@dataclass(eq=False)
class StepRecord:
    lam: float
    beta_min: float
    k_min: Tuple[float, float]
    B: float
    beta_origin: Optional[float]
    F: np.ndarray
    P: np.ndarray
    psi: float
    ordering_ok: bool = True

    def as_row(self) -> Dict:
        return {"lambda": self.lam, "beta_min": self.beta_min, "k1": self.k_min[0],
                "k2": self.k_min[1], "B": self.B, "beta_origin": self.beta_origin,
                "F11": self.F[0], "F21": self.F[1], "F12": self.F[2], "F22": self.F[3],
                "P11": self.P[0], "P21": self.P[1], "P12": self.P[2], "P22": self.P[3],
                "psi": self.psi}


@dataclass(eq=False)
class Check:
    point: PathPoint
    surface: BlochSurface
    rank1: Rank1Report
    beta_unstable: bool
    B_unstable: bool
    full: bool = True

    @property
    def unstable(self) -> bool:
        return self.beta_unstable or self.B_unstable


@dataclass(eq=False)
class BifurcationReport:
    lam_c: float
    bracket: Tuple[float, float]
    critical_k: List[Tuple[float, float]]
    multiplicity: int
    wavelength_class: str
    classes: List[str]
    modes: List[np.ndarray]
    k_star: Tuple[float, float]
    beta_c: float
    B_c: float
    B_bracket: Tuple[float, float]
    beta_crossed: bool
    B_crossed: bool
    surface: BlochSurface = None
    rank1: Rank1Report = None
    discontinuity: Optional[str] = None


@dataclass(eq=False)
class PathResult:
    status: str                    # bifurcation | no_bifurcation | failed
    history: List[StepRecord]
    report: Optional[BifurcationReport] = None
    message: str = ""
    last: Optional[PathPoint] = None


def classify(surface: BlochSurface, rank1: Rank1Report,
             tol: float = MULTIPLICITY_TOL) -> Tuple[str, List[str], List[Tuple[float, float]]]:
    """
    Wavelength class of a critical surface.
    @return: (class, all candidate classes, distinct critical wavevectors)
    """
    crit = critical_wavevectors(surface, tol)
    has_origin = any(k == (0.0, 0.0) for k in crit)
    others = [k for k in crit if k != (0.0, 0.0)]
    B_zero = rank1.critical or rank1.B < 0.0
    if B_zero and surface.origin_continuous is False:
        return "long_wavelength", ["long_wavelength"], crit
    if has_origin and others:
        return "tie", ["cell_periodic", "finite"], crit
    if has_origin:
        return "cell_periodic", ["cell_periodic"], crit
    return "finite", ["finite"], crit


class PathRunner:
    """Sequential driver of one load path on one RVE problem."""

    def __init__(self, problem: RveProblem, path: LoadPath,
                 settings: Optional[StabilitySettings] = None):
        self.problem = problem
        self.path = path
        self.settings = settings or StabilitySettings()
        self.grid = build_kgrid(self.settings.grid)
        spacing = 1.0 / max(1, self.settings.grid.n_coarse)
        self._radius = 2.5 * spacing
        self._previous: Optional[Check] = None
        self._steps = 0

    # equilibrium
    def solve(self, lam: float, base: Optional[PathPoint]) -> PathPoint:
        states = base.solution.states if base is not None else None
        if self.path.stress_driven:
            warm = base.stress if base is not None else None
            res = solve_stress_driven(self.problem, self.path.target(lam), warm, states,
                                      tol=self.settings.stress_tol)
            return PathPoint(lam=lam, state=res.state, solution=res.solution, stress=res)
        warm = base.solution if base is not None else None
        solution, state = homogenize(self.problem, self.path.F(lam), warm, states)
        return PathPoint(lam=lam, state=state, solution=solution)

    def advance(self, base: Optional[PathPoint], lam: float, depth: int = 0) -> PathPoint:
        """Solve at lam from base, splitting the increment on divergence."""
        try:
            return self.solve(lam, base)
        except (NewtonDivergence, StressDriverDivergence) as e:
            if depth >= self.settings.max_cutbacks:
                raise
            lam0 = base.lam if base is not None else self.path.start
            mid = 0.5 * (lam0 + lam)
            LOG.warning(f"step to lambda={lam:.6g} rejected ({e}), substepping via {mid:.6g}")
            half = self.advance(base, mid, depth + 1)
            return self.advance(half, lam, depth + 1)

    # stability
    def check(self, point: PathPoint, full: bool = True) -> Check:
        s = self.settings
        analyzer = BlochAnalyzer(self.problem.mesh, point.solution.K_T, s.method,
                                 s.include_metric)
        grid = self.grid
        if not full and self._previous is not None:
            k0 = self._previous.surface.k_min
            grid = np.unique(np.vstack([neighborhood(self.grid, k0, self._radius),
                                        [[0.0, 0.0]], origin_samples(self.grid)]), axis=0)
        surface = sweep(analyzer, grid, s.threads)
        rank1 = rank1_indicator(point.state.A, s.angle_step, s.compat)
        guard = BETA_ROUNDOFF_GUARD
        check = Check(point=point, surface=surface, rank1=rank1,
                      beta_unstable=surface.beta_min < -guard * surface.scale,
                      B_unstable=rank1.B < -guard * rank1.scale, full=grid is self.grid)
        return check

    def _full_sweep_due(self) -> bool:
        s = self.settings
        if self._previous is None or self._steps % max(1, s.check_interval) == 0:
            return True
        prev = self._previous.surface
        return prev.beta_min <= s.prefilter_margin * prev.scale

    def record(self, check: Check) -> StepRecord:
        surface, rank1, st = check.surface, check.rank1, check.point.state
        ordering_ok = True
        if surface.beta_min > BETA_ROUNDOFF_GUARD * surface.scale:
            ordering_ok = rank1.B >= -BETA_ROUNDOFF_GUARD * rank1.scale
            if not ordering_ok:
                LOG.warning(f"lambda={check.point.lam:.6g}: Bloch surface is positive "
                            f"but B = {rank1.B:.6e} < 0")
        return StepRecord(lam=check.point.lam, beta_min=surface.beta_min,
                          k_min=surface.k_min, B=rank1.B, beta_origin=surface.beta_origin,
                          F=st.F.copy(), P=st.P.copy(), psi=st.psi, ordering_ok=ordering_ok)

    def bisect(self, lo: Check, hi: Check) -> Tuple[Check, Check]:
        """Shrink [lo, hi] to bisect_tol, every midpoint solved from lo's committed state."""
        while abs(hi.point.lam - lo.point.lam) > self.settings.bisect_tol:
            mid_lam = 0.5 * (lo.point.lam + hi.point.lam)
            point = self.advance(lo.point, mid_lam)
            trial = self.check(point)
            LOG.debug(f"bisection lambda={mid_lam:.8g}: beta_min={trial.surface.beta_min:.6e}, "
                      f"B={trial.rank1.B:.6e}")
            if trial.unstable:
                hi = trial
            else:
                lo = trial
        return lo, hi

    def report(self, lo: Check, hi: Check) -> BifurcationReport:
        surface, rank1 = hi.surface, hi.rank1
        wclass, classes, crit = classify(surface, rank1, self.settings.multiplicity_tol)
        discontinuity = None
        if rank1.critical or rank1.B < 0:
            discontinuity = classify_discontinuity(rank1.m, rank1.M)
        return BifurcationReport(
            lam_c=0.5 * (lo.point.lam + hi.point.lam), bracket=(lo.point.lam, hi.point.lam),
            critical_k=crit, multiplicity=len(crit), wavelength_class=wclass,
            classes=classes, modes=recover_real_mode(surface.mode), k_star=surface.k_min,
            beta_c=surface.beta_min, B_c=rank1.B, B_bracket=(lo.rank1.B, rank1.B),
            beta_crossed=hi.beta_unstable, B_crossed=hi.B_unstable, surface=surface,
            rank1=rank1, discontinuity=discontinuity)

    def run(self) -> PathResult:
        lams = self.path.schedule()
        history: List[StepRecord] = []
        committed: Optional[PathPoint] = None
        last_check: Optional[Check] = None
        for lam in lams:
            try:
                point = self.advance(committed, lam)
            except SolverError as e:
                reached = committed.lam if committed is not None else self.path.start
                LOG.error(f"equilibrium failed at lambda={lam:.6g}: {e}")
                return PathResult(status="failed", history=history, last=committed,
                                  message=f"no bifurcation found up to lambda={reached:.6g}; "
                                          f"equilibrium failed at {lam:.6g}: {e}")
            check = self.check(point, full=self._full_sweep_due())
            if check.unstable and not check.full:
                check = self.check(point)
            self._steps += 1
            history.append(self.record(check))
            LOG.info(f"lambda={lam:.6g}: min beta={check.surface.beta_min:.6e} at "
                     f"k={check.surface.k_min}, B={check.rank1.B:.6e}")
            if check.unstable:
                if last_check is None:
                    LOG.warning("instability already present at the first load level")
                    rep = self.report(check, check)
                    return PathResult(status="bifurcation", history=history, report=rep,
                                      last=point)
                lo, hi = self.bisect(last_check, check)
                rep = self.report(lo, hi)
                LOG.info(f"first bifurcation at lambda_c={rep.lam_c:.6g} "
                         f"({rep.wavelength_class}, multiplicity {rep.multiplicity}, "
                         f"k*={rep.k_star})")
                return PathResult(status="bifurcation", history=history, report=rep,
                                  last=hi.point)
            committed = point
            last_check = check
            self._previous = check
        return PathResult(status="no_bifurcation", history=history, last=committed,
                          message=f"no bifurcation found up to lambda={lams[-1]:.6g}")


def run_path(problem: RveProblem, path: LoadPath,
             settings: Optional[StabilitySettings] = None) -> PathResult:
    return PathRunner(problem, path, settings).run()


def compare_methods(problem: RveProblem, path: LoadPath, settings: StabilitySettings,
                    methods=("cond1", "cond2", "nullspace")) -> Dict[str, PathResult]:
    """Run the same path once per Bloch method."""
    out = {}
    for method in methods:
        s = replace(settings, method=method)
        LOG.info(f"running path with Bloch method {method}")
        out[method] = run_path(problem, path, s)
    return out
