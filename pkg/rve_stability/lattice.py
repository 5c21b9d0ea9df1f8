""" Periodic lattice of a cell and its reciprocal basis. """
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from rve_stability.errors import LatticeError


def reciprocal_basis(a1, a2) -> Tuple[np.ndarray, np.ndarray]:
    """
    Solve a_i . b_j = 2 pi delta_ij for the reciprocal vectors.
    @param a1: first lattice vector
    @param a2: second lattice vector
    @return: (b1, b2)
    """
    A = np.array([a1, a2], dtype=float)
    scale = max(np.linalg.norm(A[0]), np.linalg.norm(A[1]))
    area = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if scale == 0.0 or abs(area) < 1e-12 * scale ** 2:
        raise LatticeError(f"degenerate lattice a1={A[0].tolist()}, "
                           f"a2={A[1].tolist()}")
    B = 2.0 * np.pi * np.linalg.inv(A)
    return B[:, 0].copy(), B[:, 1].copy()


@dataclass(frozen=True, eq=False)
class LatticeSpec:
    a1: np.ndarray
    a2: np.ndarray
    b1: np.ndarray = field(init=False, repr=False)
    b2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a1 = np.asarray(self.a1, dtype=float)
        a2 = np.asarray(self.a2, dtype=float)
        b1, b2 = reciprocal_basis(a1, a2)
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "a2", a2)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "b2", b2)

    @property
    def area(self) -> float:
        return float(abs(self.a1[0] * self.a2[1] - self.a1[1] * self.a2[0]))

    @property
    def max_length(self) -> float:
        return float(max(np.linalg.norm(self.a1), np.linalg.norm(self.a2)))

    def duality_residual(self) -> float:
        """max |a_i . b_j - 2 pi delta_ij|"""
        A = np.array([self.a1, self.a2])
        B = np.array([self.b1, self.b2]).T
        return float(np.max(np.abs(A @ B - 2.0 * np.pi * np.eye(2))))

    def translations(self) -> np.ndarray:
        """Candidate pairing translations c1 a1 + c2 a2 with c in {-1, 0, 1}^2, excluding 0."""
        out = []
        for c1 in (-1, 0, 1):
            for c2 in (-1, 0, 1):
                if c1 or c2:
                    out.append(c1 * self.a1 + c2 * self.a2)
        return np.array(out)

    def coefficients(self, L, tol: float = 1e-6) -> Tuple[int, int]:
        """
        Integer lattice coordinates (c1, c2) with L = c1 a1 + c2 a2.
        @raise LatticeError: if L is not a lattice translation
        """
        c = np.linalg.solve(np.array([self.a1, self.a2]).T, np.asarray(L, dtype=float))
        ci = np.rint(c)
        if np.max(np.abs(c - ci)) > tol:
            raise LatticeError(f"{np.asarray(L).tolist()} is not a lattice translation")
        return int(ci[0]), int(ci[1])

    def scaled(self, n1: int, n2: int) -> "LatticeSpec":
        return LatticeSpec(n1 * self.a1, n2 * self.a2)

    def wavevector(self, k1: float, k2: float) -> np.ndarray:
        """Physical wavevector from reciprocal coordinates."""
        return k1 * self.b1 + k2 * self.b2
