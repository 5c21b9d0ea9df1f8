"""
Constitutive models evaluated at a single material point in plane strain.

All work is done on 3x3 tensors with F33 = 1, only the in-plane blocks of P
and of the tangent dP/dF (4x4 in (11, 21, 12, 22) order) are exposed.
"""
from dataclasses import dataclass, field
from typing import Callable, ClassVar, Optional, Tuple

import numpy as np

from rve_stability.constants import FD_STEP, VOIGT_ORDER
from rve_stability.errors import ElementInversionError, MaterialError

_I3 = np.eye(3)
_SQ23 = np.sqrt(2.0 / 3.0)


@dataclass(frozen=True, eq=False)
class MaterialPointState:
    """History of a path-dependent point: Ci = inverse plastic right Cauchy-Green, alpha."""
    Ci: np.ndarray = field(default_factory=lambda: np.eye(3))
    alpha: float = 0.0


@dataclass(eq=False)
class PointResponse:
    P: np.ndarray      # 2x2
    A: np.ndarray      # 4x4 in (11, 21, 12, 22) order
    psi: float
    tau: np.ndarray    # 3x3 Kirchhoff stress


def plane_strain(F) -> np.ndarray:
    """Embed a 2x2 (or (11, 21, 12, 22) 4-vector) deformation gradient in 3x3."""
    F = np.asarray(F, dtype=float)
    if F.shape == (4,):
        F = np.array([[F[0], F[2]], [F[1], F[3]]])
    F3 = np.eye(3)
    F3[:2, :2] = F
    return F3


def to_voigt(T2: np.ndarray) -> np.ndarray:
    return np.array([T2[i, j] for i, j in VOIGT_ORDER])


def from_voigt(v) -> np.ndarray:
    return np.array([[v[0], v[2]], [v[1], v[3]]])


def _tangent_4x4(A3: np.ndarray) -> np.ndarray:
    out = np.empty((4, 4))
    for I, (i, j) in enumerate(VOIGT_ORDER):
        for J, (k, l) in enumerate(VOIGT_ORDER):
            out[I, J] = A3[i, j, k, l]
    return out


def _checked_det(F3: np.ndarray) -> float:
    J = float(np.linalg.det(F3))
    if J <= 0.0:
        raise ElementInversionError(F3[:2, :2])
    return J


def kirchhoff_pressure(tau) -> float:
    """Mean Kirchhoff stress tr(tau)/3 of a 3x3 tensor."""
    return float(np.trace(np.asarray(tau, dtype=float))) / 3.0


def _neo_hookean(F3: np.ndarray, kappa: float, mu: float) -> PointResponse:
    J = _checked_det(F3)
    G = np.linalg.inv(F3).T
    I1 = float(np.sum(F3 * F3))
    Jm23 = J ** (-2.0 / 3.0)
    dev = F3 - I1 / 3.0 * G

    P3 = kappa * (J - 1.0) * J * G + mu * Jm23 * dev
    psi = 0.5 * kappa * (J - 1.0) ** 2 + 0.5 * mu * (Jm23 * I1 - 3.0)

    GG = np.einsum("ij,kl->ijkl", G, G)
    GGt = np.einsum("il,kj->ijkl", G, G)
    II = np.einsum("ik,jl->ijkl", _I3, _I3)
    A3 = kappa * (2.0 * J * J - J) * GG - kappa * (J * J - J) * GGt
    A3 += mu * Jm23 * (-2.0 / 3.0 * np.einsum("ij,kl->ijkl", dev, G)
                       + II
                       - 2.0 / 3.0 * np.einsum("ij,kl->ijkl", G, F3)
                       + I1 / 3.0 * GGt)
    return PointResponse(P=P3[:2, :2].copy(), A=_tangent_4x4(A3), psi=psi,
                         tau=P3 @ F3.T)


def _log_strain_plasticity(F3: np.ndarray, state: MaterialPointState, kappa: float,
                           mu: float, sigma_y: float, K_p: float
                           ) -> Tuple[PointResponse, MaterialPointState]:
    """
    Exponential-map return in principal logarithmic strains for the energy
    kappa/2 (ln J)^2 + mu/4 I:(ln b_iso)^2 with linear isotropic hardening.
    """
    _checked_det(F3)
    Finv = np.linalg.inv(F3)
    G = Finv.T
    be_trial = F3 @ state.Ci @ F3.T
    x, n = np.linalg.eigh(0.5 * (be_trial + be_trial.T))
    eps_tr = 0.5 * np.log(x)
    vol = float(np.sum(eps_tr))
    s_tr = 2.0 * mu * (eps_tr - vol / 3.0)
    q = float(np.linalg.norm(s_tr))
    phi = q - _SQ23 * (sigma_y + K_p * state.alpha)

    dev_proj = np.eye(3) - 1.0 / 3.0
    if phi <= 0.0:
        eps, s, alpha = eps_tr, s_tr, state.alpha
        D = kappa + 2.0 * mu * dev_proj
    else:
        dgamma = phi / (2.0 * mu + 2.0 / 3.0 * K_p)
        nu = s_tr / q
        s = s_tr - 2.0 * mu * dgamma * nu
        eps = eps_tr - dgamma * nu
        alpha = state.alpha + _SQ23 * dgamma
        c = 1.0 - 2.0 * mu * dgamma / q
        D = (kappa + 2.0 * mu * c * dev_proj
             + 2.0 * mu * (2.0 * mu * dgamma / q - 2.0 * mu / (2.0 * mu + 2.0 / 3.0 * K_p))
             * np.outer(nu, nu))

    tau_p = kappa * vol + s
    tau = (n * tau_p) @ n.T
    be_new = (n * np.exp(2.0 * eps)) @ n.T
    Ci_new = Finv @ be_new @ Finv.T
    psi = 0.5 * kappa * vol ** 2 + float(np.sum(s * s)) / (4.0 * mu)
    P3 = tau @ G

    # directional derivatives of the isotropic map be_trial -> tau
    dy_dx = D / (2.0 * x[None, :])
    theta = np.zeros((3, 3))
    for a in range(3):
        for b in range(3):
            if a == b:
                continue
            if abs(x[a] - x[b]) > 1e-9 * max(x[a], x[b]):
                theta[a, b] = (tau_p[a] - tau_p[b]) / (x[a] - x[b])
            else:
                theta[a, b] = dy_dx[a, a] - dy_dx[a, b]
    A = np.empty((4, 4))
    for J_, (k, l) in enumerate(VOIGT_ORDER):
        E = np.zeros((3, 3))
        E[k, l] = 1.0
        dbe = E @ state.Ci @ F3.T
        dB = n.T @ (dbe + dbe.T) @ n
        dY = theta * dB
        np.fill_diagonal(dY, dy_dx @ np.diag(dB))
        dtau = n @ dY @ n.T
        dP = dtau @ G - tau @ G @ E.T @ G
        A[:, J_] = to_voigt(dP[:2, :2])

    response = PointResponse(P=P3[:2, :2].copy(), A=A, psi=psi, tau=tau)
    if phi <= 0.0:
        return response, state
    Ci_new = 0.5 * (Ci_new + Ci_new.T)
    return response, MaterialPointState(Ci=Ci_new, alpha=float(alpha))


class Material:
    """Common interface of the point models."""
    kind: ClassVar[str] = ""
    path_dependent: ClassVar[bool] = False

    def initial_state(self) -> Optional[MaterialPointState]:
        return None

    def evaluate(self, F, state=None, isochoric: bool = False
                 ) -> Tuple[PointResponse, Optional[MaterialPointState]]:
        raise NotImplementedError

    def volumetric(self, J: float) -> Tuple[float, float, float]:
        """
        Volumetric measure used by the mixed element, U(J) = kappa/2 g(J)^2.
        @return: (g, h, dh/dJ) with h = J g'(J)
        """
        raise NotImplementedError

    @property
    def bulk_modulus(self) -> float:
        return self.kappa


@dataclass(frozen=True)
class NeoHookean(Material):
    """psi = kappa/2 (J - 1)^2 + mu/2 (J^(-2/3) tr C - 3)"""
    kappa: float
    mu: float
    kind: ClassVar[str] = "neo_hookean"

    def __post_init__(self):
        if self.kappa <= 0 or self.mu <= 0:
            raise MaterialError(f"neo_hookean needs kappa > 0 and mu > 0, "
                                f"got kappa={self.kappa}, mu={self.mu}")

    def evaluate(self, F, state=None, isochoric: bool = False):
        kappa = 0.0 if isochoric else self.kappa
        return _neo_hookean(plane_strain(F), kappa, self.mu), state

    def volumetric(self, J: float):
        return J - 1.0, J, 1.0


@dataclass(frozen=True)
class J2Plasticity(Material):
    """
    Finite strain J2 plasticity, quadratic in elastic logarithmic strains,
    yield ||tau_dev|| - sqrt(2/3)(sigma_y + K_p alpha) <= 0.
    """
    kappa: float
    mu: float
    sigma_y: float
    K_p: float = 0.0
    kind: ClassVar[str] = "j2_plasticity"
    path_dependent: ClassVar[bool] = True

    def __post_init__(self):
        if self.kappa <= 0 or self.mu <= 0 or self.sigma_y <= 0 or self.K_p < 0:
            raise MaterialError(f"j2_plasticity needs kappa, mu, sigma_y > 0 and "
                                f"K_p >= 0, got {self}")

    def initial_state(self) -> MaterialPointState:
        return MaterialPointState()

    def evaluate(self, F, state=None, isochoric: bool = False):
        kappa = 0.0 if isochoric else self.kappa
        return _log_strain_plasticity(plane_strain(F), state or MaterialPointState(),
                                      kappa, self.mu, self.sigma_y, self.K_p)

    def volumetric(self, J: float):
        return float(np.log(J)), 1.0, 0.0

    def yield_function(self, tau, alpha: float) -> float:
        tau = np.asarray(tau, dtype=float)
        dev = tau - kirchhoff_pressure(tau) * _I3
        return float(np.linalg.norm(dev)) - _SQ23 * (self.sigma_y + self.K_p * alpha)


MATERIALS = {cls.kind: cls for cls in (NeoHookean, J2Plasticity)}


def material_from_config(cfg: dict) -> Material:
    """Build a material from its config block {"kind": .., parameters..}."""
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind not in MATERIALS:
        raise MaterialError(f"unknown material kind '{kind}', "
                            f"expected one of {sorted(MATERIALS)}")
    try:
        return MATERIALS[kind](**{k: float(v) for k, v in cfg.items()})
    except TypeError as e:
        raise MaterialError(f"bad parameters for {kind}: {e}")


def nh_eval(F, params: NeoHookean) -> PointResponse:
    return params.evaluate(F)[0]


def j2_eval(F, state_old: MaterialPointState, params: J2Plasticity
            ) -> Tuple[PointResponse, MaterialPointState]:
    return params.evaluate(F, state_old)


def fd_tangent(stress: Callable[[np.ndarray], np.ndarray], F, h: float = FD_STEP
               ) -> np.ndarray:
    """
    Central finite-difference dP/dF.
    @param stress: maps a (11, 21, 12, 22) 4-vector F to the 2x2 P
    @param F: 4-vector or 2x2
    @return: 4x4 tangent
    """
    F = np.asarray(F, dtype=float)
    Fv = to_voigt(F) if F.shape == (2, 2) else F.copy()
    A = np.empty((4, 4))
    for J in range(4):
        dF = np.zeros(4)
        dF[J] = h
        A[:, J] = (to_voigt(stress(Fv + dF)) - to_voigt(stress(Fv - dF))) / (2.0 * h)
    return A
