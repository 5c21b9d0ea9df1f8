"""
Rank-one convexity of the homogenized tangent.

B = min over unit m, M of (m x M) : A : (m x M). For a fixed normal M the
inner minimum over m is the smallest eigenvalue of the 2x2 acoustic tensor
Q(M)_ij = A_iKjL M_K M_L, so only M is scanned on the angle grid.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from rve_stability.constants import (ANGLE_STEP, B_CRITICAL_THRESHOLD, SHEAR_COSINE,
                                     SPLITTING_COSINE)
from rve_stability.errors import ClassificationMisuseError


@dataclass(eq=False)
class Rank1Report:
    B: float
    m: np.ndarray          # minimizing unit vector
    M: np.ndarray          # minimizing unit normal
    alphas: np.ndarray     # scanned normal angles in [0, pi)
    B_alpha: np.ndarray    # inner minimum at each angle
    scale: float = 1.0     # ||A||_inf

    @property
    def alpha(self) -> float:
        return float(np.arctan2(self.M[1], self.M[0]) % np.pi)

    @property
    def critical(self) -> bool:
        return abs(self.B) < B_CRITICAL_THRESHOLD * self.scale

    @property
    def elliptic(self) -> bool:
        return self.B >= B_CRITICAL_THRESHOLD * self.scale

    def discontinuity(self) -> str:
        return classify_discontinuity(self.m, self.M, self.B, self.scale)


def tangent_tensor(A) -> np.ndarray:
    """A_iKjL from the 4x4 tangent in (11, 21, 12, 22) order."""
    A = np.asarray(A, dtype=float)
    T = np.empty((2, 2, 2, 2))
    for i in range(2):
        for K in range(2):
            for j in range(2):
                for L in range(2):
                    T[i, K, j, L] = A[i + 2 * K, j + 2 * L]
    return T


def acoustic_tensor(A, M) -> np.ndarray:
    """Symmetrized Q(M) for one normal (2,) or a stack of normals (n, 2)."""
    T = tangent_tensor(A)
    Q = np.einsum("ikjl,...k,...l->...ij", T, M, M)
    return 0.5 * (Q + np.swapaxes(Q, -1, -2))


def _unit(angles: np.ndarray) -> np.ndarray:
    return np.column_stack([np.cos(angles), np.sin(angles)])


def rank1_indicator(A, angle_step: float = ANGLE_STEP, compat: bool = False) -> Rank1Report:
    """
    Scan normals M(alpha), alpha in [0, pi), and minimize over m.

    @param A: 4x4 homogenized tangent
    @param angle_step: angular increment of the scan
    @param compat: also scan m on the same angle grid instead of the exact
                   eigenvalue minimum
    """
    A = np.asarray(A, dtype=float)
    n = max(1, int(np.ceil(np.pi / angle_step - 1e-9)))
    alphas = np.arange(n) * angle_step
    normals = _unit(alphas)
    Q = acoustic_tensor(A, normals)
    if compat:
        ms = _unit(alphas)
        forms = np.einsum("ai,nij,aj->na", ms, Q, ms)
        best = np.argmin(forms, axis=1)
        B_alpha = forms[np.arange(len(alphas)), best]
        vectors = ms[best]
    else:
        vals, vecs = np.linalg.eigh(Q)
        B_alpha = vals[:, 0]
        vectors = vecs[:, :, 0]
    j = int(np.argmin(B_alpha))
    scale = float(np.max(np.sum(np.abs(A), axis=1)))
    m = vectors[j] / np.linalg.norm(vectors[j])
    return Rank1Report(B=float(B_alpha[j]), m=m, M=normals[j], alphas=alphas,
                       B_alpha=B_alpha, scale=scale)


def classify_discontinuity(m, M, B: Optional[float] = None, scale: float = 1.0) -> str:
    """
    Kind of the weak discontinuity at loss of ellipticity: 'shear' when m is
    orthogonal to M, 'splitting' when parallel, 'mixed' otherwise.
    @raise ClassificationMisuseError: if B is given and clearly positive
    """
    if B is not None and B >= B_CRITICAL_THRESHOLD * scale:
        raise ClassificationMisuseError(f"B = {B:.6g} is not critical, "
                                        f"no discontinuity to classify")
    m = np.asarray(m, dtype=float)
    M = np.asarray(M, dtype=float)
    c = abs(float(m @ M)) / (np.linalg.norm(m) * np.linalg.norm(M))
    if c <= SHEAR_COSINE:
        return "shear"
    if c >= SPLITTING_COSINE:
        return "splitting"
    return "mixed"
