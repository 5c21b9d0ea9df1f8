"""
Isoparametric quadrilaterals: displacement Q4 (2x2 Gauss) and mixed Q9P3
(3x3 Gauss, discontinuous pressure 1, xi, eta) with the pressure condensed
on the element, so every element hands back displacement-only quantities.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from rve_stability.constants import VOIGT_ORDER
from rve_stability.errors import ElementInversionError, MeshDistortionError
from rve_stability.materials import Material, to_voigt

_Q4_NODES = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
_Q9_NODES = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1],
                      [0, -1], [1, 0], [0, 1], [-1, 0], [0, 0]], dtype=float)


@dataclass(frozen=True, eq=False)
class Quadrature:
    points: np.ndarray   # (q, 2) parent coordinates
    weights: np.ndarray  # (q,)
    N: np.ndarray        # (q, n) shape functions
    dN: np.ndarray       # (q, n, 2) parent derivatives


@dataclass(eq=False)
class ElementResult:
    f: np.ndarray                 # internal force
    k: Optional[np.ndarray]       # displacement-only tangent
    states: List
    energy: float                 # integral of the stored energy
    stress_integral: np.ndarray   # integral of P as a 4-vector
    pressure: Optional[np.ndarray] = None


def _lagrange2(t):
    return np.array([0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)])


def _dlagrange2(t):
    return np.array([t - 0.5, -2.0 * t, t + 0.5])


def _q4(xi, eta):
    N = 0.25 * (1 + _Q4_NODES[:, 0] * xi) * (1 + _Q4_NODES[:, 1] * eta)
    dN = np.stack([0.25 * _Q4_NODES[:, 0] * (1 + _Q4_NODES[:, 1] * eta),
                   0.25 * _Q4_NODES[:, 1] * (1 + _Q4_NODES[:, 0] * xi)], axis=1)
    return N, dN


def _q9(xi, eta):
    lx, ly = _lagrange2(xi), _lagrange2(eta)
    dx, dy = _dlagrange2(xi), _dlagrange2(eta)
    idx = (_Q9_NODES + 1).astype(int)
    N = lx[idx[:, 0]] * ly[idx[:, 1]]
    dN = np.stack([dx[idx[:, 0]] * ly[idx[:, 1]], lx[idx[:, 0]] * dy[idx[:, 1]]], axis=1)
    return N, dN


@lru_cache(maxsize=None)
def quadrature(kind: str) -> Quadrature:
    n, shape = (2, _q4) if kind == "Q4" else (3, _q9)
    x, w = leggauss(n)
    pts = np.array([[a, b] for a in x for b in x])
    wts = np.array([wa * wb for wa in w for wb in w])
    Ns, dNs = zip(*(shape(a, b) for a, b in pts))
    return Quadrature(points=pts, weights=wts, N=np.array(Ns), dN=np.array(dNs))


def shape_gradients(kind: str, coords: np.ndarray, element: int = None):
    """
    Reference-configuration shape function gradients at every quadrature point.
    @return: (dN/dX (q, n, 2), det J * weight (q,))
    """
    quad = quadrature(kind)
    J0 = np.einsum("na,qnb->qab", coords, quad.dN)
    det = J0[:, 0, 0] * J0[:, 1, 1] - J0[:, 0, 1] * J0[:, 1, 0]
    if np.any(det <= 0.0):
        raise MeshDistortionError("non-positive isoparametric Jacobian", element)
    dNdX = np.einsum("qnb,qba->qna", quad.dN, np.linalg.inv(J0))
    return dNdX, det * quad.weights


def b_matrix(dNdX: np.ndarray) -> np.ndarray:
    """4 x 2n gradient operator, rows ordered (11, 21, 12, 22)."""
    n = dNdX.shape[0]
    B = np.zeros((4, 2 * n))
    B[0, 0::2] = dNdX[:, 0]
    B[1, 1::2] = dNdX[:, 0]
    B[2, 0::2] = dNdX[:, 1]
    B[3, 1::2] = dNdX[:, 1]
    return B


def _deformation_gradient(u_nodes: np.ndarray, dNdX: np.ndarray) -> np.ndarray:
    return np.eye(2) + u_nodes.T @ dNdX


def _displacement_element(kind, coords, u_e, states, material, need_tangent, element):
    dNdX, dV = shape_gradients(kind, coords, element)
    u_nodes = u_e.reshape(-1, 2)
    ndof = u_e.size
    f = np.zeros(ndof)
    k = np.zeros((ndof, ndof)) if need_tangent else None
    new_states, energy, stress = [], 0.0, np.zeros(4)
    for q in range(len(dV)):
        F = _deformation_gradient(u_nodes, dNdX[q])
        resp, st = material.evaluate(F, states[q])
        B = b_matrix(dNdX[q])
        Pv = to_voigt(resp.P)
        f += B.T @ Pv * dV[q]
        if need_tangent:
            k += B.T @ resp.A @ B * dV[q]
        new_states.append(st)
        energy += resp.psi * dV[q]
        stress += Pv * dV[q]
    return ElementResult(f=f, k=k, states=new_states, energy=energy, stress_integral=stress)


def _mixed_element(kind, coords, u_e, states, material, need_tangent, element):
    """
    Perturbed-Lagrangian u/p element, pi = psi_iso(F) + p g(J) - p^2 / (2 kappa),
    with p solved exactly from the element pressure equation and condensed.
    """
    quad = quadrature(kind)
    dNdX, dV = shape_gradients(kind, coords, element)
    u_nodes = u_e.reshape(-1, 2)
    ndof = u_e.size
    kappa = material.bulk_modulus
    Np = np.column_stack([np.ones(len(dV)), quad.points])

    Fs = [_deformation_gradient(u_nodes, dNdX[q]) for q in range(len(dV))]
    Js = np.array([np.linalg.det(F) for F in Fs])
    for q, J in enumerate(Js):
        if J <= 0.0:
            raise ElementInversionError(Fs[q], element, q)
    vol = [material.volumetric(J) for J in Js]
    M = np.einsum("qa,qb,q->ab", Np, Np, dV)
    Minv = np.linalg.inv(M)
    gvec = np.einsum("qa,q,q->a", Np, np.array([v[0] for v in vol]), dV)
    p_modes = kappa * Minv @ gvec

    f = np.zeros(ndof)
    k = np.zeros((ndof, ndof)) if need_tangent else None
    Kup = np.zeros((ndof, 3))
    new_states, energy, stress = [], 0.0, np.zeros(4)
    for q in range(len(dV)):
        resp, st = material.evaluate(Fs[q], states[q], isochoric=True)
        g, h, dh = vol[q]
        p = float(Np[q] @ p_modes)
        G = np.linalg.inv(Fs[q]).T
        gv = h * to_voigt(G)
        B = b_matrix(dNdX[q])
        Pv = to_voigt(resp.P) + p * gv
        f += B.T @ Pv * dV[q]
        if need_tangent:
            Gv = to_voigt(G)
            Gt = np.array([[G[i, l] * G[k_, j] for (k_, l) in VOIGT_ORDER]
                           for (i, j) in VOIGT_ORDER])
            geo = p * (dh * Js[q] * np.outer(Gv, Gv) - h * Gt)
            k += B.T @ (resp.A + geo) @ B * dV[q]
            Kup += np.outer(B.T @ gv, Np[q]) * dV[q]
        new_states.append(st)
        energy += (resp.psi + p * g - p * p / (2.0 * kappa)) * dV[q]
        stress += Pv * dV[q]
    if need_tangent:
        k += kappa * Kup @ Minv @ Kup.T
    return ElementResult(f=f, k=k, states=new_states, energy=energy,
                         stress_integral=stress, pressure=p_modes)


def element_response(kind: str, coords: np.ndarray, u_e: np.ndarray, states: Sequence,
                     material: Material, need_tangent: bool = True,
                     element: int = None) -> ElementResult:
    """
    Internal force, tangent and updated point states of one element.
    @param kind: "Q4" or "Q9" (Q9 is always the mixed Q9P3 formulation)
    @param coords: (n, 2) reference node coordinates
    @param u_e: (2n,) element displacements, node-major
    @param states: per quadrature point state (None for hyperelastic points)
    """
    if kind == "Q4":
        return _displacement_element(kind, coords, u_e, states, material,
                                     need_tangent, element)
    return _mixed_element(kind, coords, u_e, states, material, need_tangent, element)


def n_points(kind: str) -> int:
    return len(quadrature(kind).weights)
