"""
Strain-driven RVE solve and homogenized quantities.

The micro problem is the constrained equilibrium

    R = [F_int(u) - C^T nu ; -C u + L ([F] - [I])] = 0

solved by Newton on the bordered (symmetric, indefinite) Jacobian
[[K_T, -C^T], [-C, 0]]. For periodic boundaries C = [A1; A2] and
L = [0; L_M]; for linear displacement boundaries C selects every outer
boundary node and L maps F to its affine displacement.
"""
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from ovos_utils.log import LOG
from scipy.sparse import bmat, csr_matrix
from scipy.sparse.linalg import splu

from rve_stability.assembly import AssembledSystem, assemble, initial_states
from rve_stability.constants import NEWTON_MAX_ITER, NEWTON_TOL, SINGULAR_PIVOT_RATIO
from rve_stability.errors import (ElementInversionError, NewtonDivergence,
                                  SingularSystemError, SolverError)
from rve_stability.materials import Material, from_voigt

_I4 = np.array([1.0, 0.0, 0.0, 1.0])


@dataclass
class NewtonSettings:
    tol: float = NEWTON_TOL
    max_iterations: int = NEWTON_MAX_ITER
    singular_ratio: float = SINGULAR_PIVOT_RATIO


class BoundaryCondition:
    """Linear constraints C u = L ([F] - [I]) on total displacements."""
    name = ""

    def __init__(self, C: csr_matrix, L: np.ndarray):
        self.C = C
        self.L = L

    def h(self, F_bar) -> np.ndarray:
        return self.L @ (np.asarray(F_bar, dtype=float) - _I4)


class PeriodicBoundary(BoundaryCondition):
    name = "periodic"

    def __init__(self, mesh):
        ops = mesh.constraints
        super().__init__(ops.C, ops.L_hat)
        self.operators = ops


class LinearBoundary(BoundaryCondition):
    """Zero fluctuation on the outer boundary."""
    name = "linear"

    def __init__(self, mesh):
        if mesh.pairing is None:
            mesh.paired()
        nodes = mesh.pairing.boundary_nodes
        nb = len(nodes)
        rows = np.arange(2 * nb)
        cols = np.column_stack([2 * nodes, 2 * nodes + 1]).ravel()
        C = csr_matrix((np.ones(2 * nb), (rows, cols)), shape=(2 * nb, mesh.n_dofs))
        X = mesh.nodes[nodes]
        L = np.zeros((2 * nb, 4))
        L[0::2, 0] = X[:, 0]
        L[0::2, 2] = X[:, 1]
        L[1::2, 1] = X[:, 0]
        L[1::2, 3] = X[:, 1]
        super().__init__(C, L)
        self.nodes = nodes


@dataclass(eq=False)
class RveProblem:
    mesh: object
    materials: Dict[int, Material]
    boundary: BoundaryCondition = None
    settings: NewtonSettings = field(default_factory=NewtonSettings)

    def __post_init__(self):
        missing = set(self.mesh.materials) - set(self.materials)
        if missing:
            raise SolverError(f"no material defined for ids {sorted(missing)}")
        if self.boundary is None:
            self.boundary = PeriodicBoundary(self.mesh)

    @property
    def path_dependent(self) -> bool:
        return any(m.path_dependent for m in self.materials.values())

    def virgin_states(self):
        return initial_states(self.mesh, self.materials)

    def with_boundary(self, boundary: BoundaryCondition) -> "RveProblem":
        return replace(self, boundary=boundary)


@dataclass(eq=False)
class RveSolution:
    F_bar: np.ndarray
    u: np.ndarray
    multipliers: np.ndarray
    states: List[List]
    system: AssembledSystem
    jacobian: csr_matrix
    lu: object
    iterations: int
    residuals: List[float]
    min_pivot: float
    max_pivot: float

    @property
    def K_T(self) -> csr_matrix:
        return self.system.K_T

    @property
    def lambda_fix(self) -> np.ndarray:
        """Multiplier of the fixed node constraint (periodic boundaries)."""
        return self.multipliers[:2]

    @property
    def mu_lag(self) -> np.ndarray:
        return self.multipliers[2:]


@dataclass(eq=False)
class MacroState:
    F: np.ndarray        # (11, 21, 12, 22)
    P: np.ndarray        # from the multipliers
    A: np.ndarray        # 4x4
    psi: float
    P_avg: np.ndarray    # quadrature volume average
    iterations: int = 0
    min_pivot: float = 0.0

    @property
    def tau(self) -> np.ndarray:
        """Homogenized Kirchhoff stress P F^T (2x2)."""
        return from_voigt(self.P) @ from_voigt(self.F).T


def _bordered(K: csr_matrix, C: csr_matrix) -> csr_matrix:
    return bmat([[K, -C.T], [-C, None]], format="csc")


def _factorize(J, settings: NewtonSettings, guard: bool = True):
    try:
        lu = splu(J)
    except RuntimeError as e:
        raise SingularSystemError(f"bordered Jacobian is singular: {e}")
    pivots = np.abs(lu.U.diagonal())
    lo, hi = float(pivots.min()), float(pivots.max())
    if guard and lo < settings.singular_ratio * hi:
        raise SingularSystemError("bordered Jacobian is numerically singular", lo, hi)
    return lu, lo, hi


def solve_rve(problem: RveProblem, F_bar, warm_start: Optional[RveSolution] = None,
              states: Optional[List[List]] = None) -> RveSolution:
    """
    Newton solve of the constrained micro equilibrium at macro gradient F_bar.

    @param problem: mesh, materials and boundary condition
    @param F_bar: (11, 21, 12, 22) macroscopic deformation gradient
    @param warm_start: converged solution of the previous step, its displacement
                       field is shifted by the affine increment as predictor
    @param states: committed point states to integrate from, defaults to the
                   warm start's states or the virgin state
    @return: RveSolution with tentative states for the caller to commit
    @raise NewtonDivergence: step rejection signal
    @raise SingularSystemError: at limit or bifurcation points
    """
    mesh, bc, settings = problem.mesh, problem.boundary, problem.settings
    F_bar = np.asarray(F_bar, dtype=float)
    if F_bar[0] * F_bar[3] - F_bar[1] * F_bar[2] <= 0:
        raise SolverError(f"macroscopic det F <= 0 for F={F_bar.tolist()}")
    C = bc.C
    h = bc.h(F_bar)
    N = mesh.n_dofs
    if warm_start is not None:
        u = warm_start.u + mesh.affine(F_bar) - mesh.affine(warm_start.F_bar)
        nu = warm_start.multipliers.copy()
        if states is None:
            states = warm_start.states
    else:
        u = mesh.affine(F_bar)
        nu = np.zeros(C.shape[0])
    if states is None:
        states = problem.virgin_states()

    residuals = []
    for it in range(settings.max_iterations + 1):
        try:
            system = assemble(mesh, u, states, problem.materials)
        except ElementInversionError as e:
            raise NewtonDivergence(f"element inversion: {e}", it) from e
        R = np.concatenate([system.F_int - C.T @ nu, h - C @ u])
        norm = float(np.max(np.abs(R)))
        residuals.append(norm)
        scale = max(1.0, float(np.max(np.abs(system.F_int))))
        LOG.debug(f"newton {it}: |R| = {norm:.3e} (target {settings.tol * scale:.3e})")
        if not np.isfinite(norm):
            raise NewtonDivergence("non-finite residual", it, norm)
        J = _bordered(system.K_T, C)
        if norm < settings.tol * scale:
            # a converged iterate is kept at a limit point, the pivots report it
            lu, lo, hi = _factorize(J, settings, guard=False)
            if lo < settings.singular_ratio * hi:
                LOG.warning(f"converged on a nearly singular Jacobian at F={F_bar.tolist()} "
                            f"(smallest pivot {lo:.3e}, largest {hi:.3e})")
            return RveSolution(F_bar=F_bar, u=u, multipliers=nu, states=system.states,
                               system=system, jacobian=J, lu=lu, iterations=it,
                               residuals=residuals, min_pivot=lo, max_pivot=hi)
        if it == settings.max_iterations:
            break
        lu, _, _ = _factorize(J, settings)
        delta = lu.solve(-R)
        u = u + delta[:N]
        nu = nu + delta[N:]
    raise NewtonDivergence("Newton did not converge", settings.max_iterations, residuals[-1])


def macro_stress(solution: RveSolution, problem: RveProblem) -> np.ndarray:
    """[P] = (1/V) L^T nu"""
    return problem.boundary.L.T @ solution.multipliers / problem.mesh.volume


def volume_average_stress(solution: RveSolution, problem: RveProblem) -> np.ndarray:
    return solution.system.stress_integral / problem.mesh.volume


def macro_tangent(solution: RveSolution, problem: RveProblem) -> np.ndarray:
    """
    A = -(1/V) L_hat^T J^-1 L_hat from four solves with the factorized
    bordered Jacobian.
    """
    N = problem.mesh.n_dofs
    L = problem.boundary.L
    rhs = np.vstack([np.zeros((N, 4)), L])
    X = solution.lu.solve(rhs)
    return -(rhs.T @ X) / problem.mesh.volume


def macro_energy(solution: RveSolution, problem: RveProblem) -> float:
    return solution.system.energy / problem.mesh.volume


def macro_state(solution: RveSolution, problem: RveProblem) -> MacroState:
    return MacroState(F=solution.F_bar.copy(), P=macro_stress(solution, problem),
                      A=macro_tangent(solution, problem),
                      psi=macro_energy(solution, problem),
                      P_avg=volume_average_stress(solution, problem),
                      iterations=solution.iterations, min_pivot=solution.min_pivot)


def homogenize(problem: RveProblem, F_bar, warm_start: Optional[RveSolution] = None,
               states=None) -> Tuple[RveSolution, MacroState]:
    solution = solve_rve(problem, F_bar, warm_start, states)
    state = macro_state(solution, problem)
    if np.linalg.norm(state.P) > 0:
        gap = np.linalg.norm(state.P - state.P_avg) / np.linalg.norm(state.P)
        if gap > 1e-8:
            LOG.warning(f"multiplier and volume-average stress differ by {gap:.2e}")
    return solution, state


def linear_displacement_solve(problem: RveProblem, F_bar, warm_start=None) -> MacroState:
    """Homogenize with zero boundary fluctuation (affine Dirichlet data)."""
    linear = problem.with_boundary(LinearBoundary(problem.mesh))
    return homogenize(linear, F_bar, warm_start)[1]


def homogenize_path(problem: RveProblem, F_target, n_steps: int = 1,
                    start: Optional[RveSolution] = None, min_fraction: float = 1e-4,
                    easy_steps: int = 3) -> Tuple[RveSolution, List[MacroState]]:
    """
    Ramp F linearly from the start solution (or I) to F_target.

    Failed increments are halved and retried from the committed state, the
    increment doubles again after `easy_steps` consecutive accepted steps.
    @return: (final solution, per-step macro states)
    """
    F_start = start.F_bar if start is not None else _I4.copy()
    F_target = np.asarray(F_target, dtype=float)
    dt0 = 1.0 / max(1, n_steps)
    dt, t = dt0, 0.0
    committed = start
    records, streak = [], 0
    while t < 1.0 - 1e-12:
        dt = min(dt, 1.0 - t)
        F = F_start + (t + dt) * (F_target - F_start)
        try:
            solution, state = homogenize(problem, F, committed)
        except NewtonDivergence as e:
            dt *= 0.5
            streak = 0
            LOG.warning(f"step rejected at t={t + 2 * dt:.6g} ({e}), cutting back to dt={dt:.3g}")
            if dt < min_fraction * dt0:
                raise NewtonDivergence(f"load increment fell below {min_fraction} of the "
                                       f"initial size at t={t:.6g}", e.iterations, e.residual)
            continue
        t += dt
        committed = solution
        records.append(state)
        streak += 1
        LOG.info(f"accepted t={t:.6g}: P={np.round(state.P, 6).tolist()}, "
                 f"{solution.iterations} iterations")
        if streak >= easy_steps and dt < dt0:
            dt = min(2.0 * dt, dt0)
            streak = 0
    return committed, records
