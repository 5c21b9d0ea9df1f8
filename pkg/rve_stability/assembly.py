"""
Global scatter-add of element contributions.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from rve_stability.elements import element_response, n_points
from rve_stability.errors import ElementInversionError, MeshDistortionError
from rve_stability.materials import Material


@dataclass(eq=False)
class AssembledSystem:
    F_int: np.ndarray
    K_T: Optional[csr_matrix]
    states: List[List]            # per element, per quadrature point
    energy: float                 # integral of psi over the solid
    stress_integral: np.ndarray   # integral of P over the solid, 4-vector


def element_dofs(connectivity) -> np.ndarray:
    conn = np.asarray(connectivity, dtype=int)
    return np.column_stack([2 * conn, 2 * conn + 1]).ravel()


def initial_states(mesh, materials: Dict[int, Material]) -> List[List]:
    return [[materials[el.material].initial_state() for _ in range(n_points(el.kind))]
            for el in mesh.elements]


def assemble(mesh, u: np.ndarray, states: List[List], materials: Dict[int, Material],
             need_tangent: bool = True) -> AssembledSystem:
    """
    Internal forces and tangent stiffness of the whole mesh.
    The returned states are tentative, callers commit them on step acceptance.
    """
    N = mesh.n_dofs
    F_int = np.zeros(N)
    rows, cols, vals = [], [], []
    new_states, energy, stress = [], 0.0, np.zeros(4)
    for e, el in enumerate(mesh.elements):
        dofs = element_dofs(el.connectivity)
        try:
            res = element_response(el.kind, mesh.nodes[list(el.connectivity)], u[dofs],
                                   states[e], materials[el.material], need_tangent, e)
        except ElementInversionError as err:
            if err.element is None:
                raise ElementInversionError(err.F, e, None) from err
            raise
        except MeshDistortionError as err:
            if err.element is None:
                raise MeshDistortionError(str(err), e) from err
            raise
        F_int[dofs] += res.f
        if need_tangent:
            rows.append(np.repeat(dofs, dofs.size))
            cols.append(np.tile(dofs, dofs.size))
            vals.append(res.k.ravel())
        new_states.append(res.states)
        energy += res.energy
        stress += res.stress_integral
    K = None
    if need_tangent:
        K = coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(N, N)).tocsr()
        K.sum_duplicates()
    return AssembledSystem(F_int=F_int, K_T=K, states=new_states, energy=energy,
                           stress_integral=stress)
