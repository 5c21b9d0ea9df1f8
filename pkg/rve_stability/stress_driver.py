"""
Stress-driven homogenization: Newton on the three components of a symmetric
macroscopic F so that the homogenized Kirchhoff stress, seen in the principal
frame rotated by theta, equals diag(-lambda cos phi, -lambda sin phi).
Every outer iteration is a full strain-driven RVE solve.
"""
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np
from ovos_utils.log import LOG

from rve_stability.constants import STRESS_TOL, VOIGT_ORDER
from rve_stability.errors import SingularSystemError, StressDriverDivergence
from rve_stability.homogenizer import MacroState, RveProblem, RveSolution, homogenize
from rve_stability.materials import from_voigt, to_voigt

# [F] = I43 (F11, F22, F12)
I43 = np.array([[1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0],
                [0.0, 0.0, 1.0],
                [0.0, 1.0, 0.0]])
IDENTITY_HAT = np.array([1.0, 1.0, 0.0])


@dataclass(frozen=True)
class StressTarget:
    lam: float
    phi: float
    theta: float = 0.0

    @property
    def principal(self) -> Tuple[float, float]:
        """(tau_1, tau_2), lambda positive in compression."""
        return -self.lam * np.cos(self.phi), -self.lam * np.sin(self.phi)

    @property
    def vector(self) -> np.ndarray:
        t1, t2 = self.principal
        return np.array([t1, 0.0, t2])

    def at(self, lam: float) -> "StressTarget":
        return replace(self, lam=float(lam))


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def basis_matrix(theta: float) -> np.ndarray:
    """[Q] with [tau] = [Q][tau'] for tau = Q tau' Q^T."""
    Q = rotation(theta)
    return np.kron(Q, Q)


def transform_matrix(theta: float) -> np.ndarray:
    """[T]: rows 11, 12, 22 of [Q]^T, maps [tau] to (tau'11, tau'12, tau'22)."""
    return basis_matrix(theta).T[[0, 2, 3]]


def lift(F_hat) -> np.ndarray:
    return I43 @ np.asarray(F_hat, dtype=float)


def kirchhoff_operators(P: np.ndarray, F: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    4x4 matrices with [tau] = Pbb [F] = Fbb [P] for tau = P F^T, rows and
    columns in (11, 21, 12, 22) order.
    """
    P2, F2 = from_voigt(P), from_voigt(F)
    Pbb = np.zeros((4, 4))
    Fbb = np.zeros((4, 4))
    for I, (i, j) in enumerate(VOIGT_ORDER):
        for J, (a, b) in enumerate(VOIGT_ORDER):
            if j == a:
                Pbb[I, J] = P2[i, b]
            if i == a:
                Fbb[I, J] = F2[j, b]
    return Pbb, Fbb


def stress_residual(F_hat, target: StressTarget, state: MacroState) -> np.ndarray:
    tau = to_voigt(from_voigt(state.P) @ from_voigt(lift(F_hat)).T)
    return transform_matrix(target.theta) @ tau - target.vector


def stress_jacobian(F_hat, target: StressTarget, state: MacroState) -> np.ndarray:
    """J = [T] ([Pbb] + [Fbb][A]) [I43]"""
    Pbb, Fbb = kirchhoff_operators(state.P, lift(F_hat))
    return transform_matrix(target.theta) @ (Pbb + Fbb @ state.A) @ I43


@dataclass(eq=False)
class StressDrivenResult:
    F_hat: np.ndarray
    state: MacroState
    solution: RveSolution
    iterations: int
    tau_principal: np.ndarray   # (tau'11, tau'12, tau'22)


def solve_stress_driven(problem: RveProblem, target: StressTarget,
                        warm_start: Optional[StressDrivenResult] = None,
                        states: Optional[List[List]] = None, tol: float = STRESS_TOL,
                        max_iterations: int = 25) -> StressDrivenResult:
    """
    Outer Newton loop on (F11, F22, F12).

    Inner RVE solves run at a Newton tolerance no looser than 1e-2 * tol, the
    problem's own tolerance is kept when it is already tighter (the packaged
    defaults, 1e-10 against 1e-8, need no change).
    @param states: committed point states at the start of this load step,
                   every inner solve integrates from them
    @raise StressDriverDivergence: load-substep signal
    """
    inner = problem
    if problem.settings.tol > 1e-2 * tol:
        inner = replace(problem, settings=replace(problem.settings, tol=1e-2 * tol))
    if warm_start is not None:
        F_hat = warm_start.F_hat.copy()
        previous = warm_start.solution
        if states is None:
            states = previous.states
    else:
        F_hat = IDENTITY_HAT.copy()
        previous = None
    T = transform_matrix(target.theta)
    scale = tol * max(1.0, abs(target.lam))
    norm = float("nan")
    for it in range(max_iterations + 1):
        solution, state = homogenize(inner, lift(F_hat), previous, states)
        R = stress_residual(F_hat, target, state)
        norm = float(np.max(np.abs(R)))
        LOG.debug(f"stress loop {it}: |R_tau| = {norm:.3e}")
        if norm < scale:
            tau = to_voigt(state.tau)
            return StressDrivenResult(F_hat=F_hat, state=state, solution=solution,
                                      iterations=it, tau_principal=T @ tau)
        if it == max_iterations:
            break
        J = stress_jacobian(F_hat, target, state)
        try:
            step = np.linalg.solve(J, -R)
        except np.linalg.LinAlgError:
            raise SingularSystemError("stress-driven Jacobian is singular "
                                      "(macroscopic limit point)")
        F_hat = F_hat + step
        previous = solution
    raise StressDriverDivergence(f"stress loop did not converge for lambda={target.lam}, "
                                 f"|R| = {norm:.3e}")
