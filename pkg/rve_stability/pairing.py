"""
Periodic node pairing and the constraint operators built from it.

Boundary nodes related by a lattice translation form equivalence classes.
Every class is pinned to one master (the lexicographically smallest node) and
all other members are paired to it, which deduplicates the corner constraints.
"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from ovos_utils.log import LOG
from scipy.sparse import coo_matrix, csr_matrix, vstack
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from rve_stability.constants import PAIRING_REL_TOL
from rve_stability.errors import PairingError

_Q4_EDGES = ((0, 1), (1, 2), (2, 3), (3, 0))
_Q9_EDGES = ((0, 4), (4, 1), (1, 5), (5, 2), (2, 6), (6, 3), (3, 7), (7, 0))


@dataclass(frozen=True, eq=False)
class Pairing:
    negative: np.ndarray      # (m,) master node indices
    positive: np.ndarray      # (m,) slave node indices
    translations: np.ndarray  # (m, 2) L_q with X+ = X- + L_q
    coefficients: np.ndarray  # (m, 2) integer lattice coordinates of L_q
    classes: Tuple[Tuple[int, ...], ...]

    @property
    def m(self) -> int:
        return int(len(self.negative))

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(np.concatenate([self.negative, self.positive]))

    def corner_pairs(self) -> List[Tuple[int, int, Tuple[int, int]]]:
        """Pairs whose equivalence class holds more than two nodes."""
        corners = {n for cls in self.classes if len(cls) > 2 for n in cls}
        return [(int(a), int(b), (int(c[0]), int(c[1])))
                for a, b, c in zip(self.negative, self.positive, self.coefficients)
                if a in corners]


@dataclass(frozen=True, eq=False)
class ConstraintOperators:
    A1: csr_matrix    # 2 x N fixed node selector
    A2: csr_matrix    # 2m x N differences u+ - u-
    L_M: np.ndarray   # 2m x 4

    @property
    def C(self) -> csr_matrix:
        return vstack([self.A1, self.A2]).tocsr()

    @property
    def L_hat(self) -> np.ndarray:
        """Macro map for the stacked constraints [A1; A2]."""
        return np.vstack([np.zeros((2, 4)), self.L_M])

    def h(self, F_bar) -> np.ndarray:
        return self.L_M @ (np.asarray(F_bar, dtype=float) - np.array([1.0, 0.0, 0.0, 1.0]))


def element_edges(kind: str):
    return _Q9_EDGES if kind == "Q9" else _Q4_EDGES


def boundary_edges(elements) -> np.ndarray:
    """Edges (node pairs) used by exactly one element."""
    count = {}
    for el in elements:
        conn = el.connectivity
        for i, j in element_edges(el.kind):
            key = (min(conn[i], conn[j]), max(conn[i], conn[j]))
            count[key] = count.get(key, 0) + 1
    return np.array(sorted(k for k, c in count.items() if c == 1), dtype=int).reshape(-1, 2)


def _point_segment_distance(p, a, b) -> np.ndarray:
    ab = b - a
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
    return np.linalg.norm(a + t[:, None] * ab - p, axis=1)


def build_pairing(nodes: np.ndarray, elements, lattice, tol: float = None) -> Pairing:
    """
    Match boundary nodes across lattice translations.

    @param nodes: (n, 2) node coordinates
    @param elements: mesh elements (connectivity, kind)
    @param lattice: LatticeSpec of the cell
    @param tol: matching tolerance, defaults to 1e-8 times the longest lattice vector
    @return: Pairing
    """
    tol = tol or PAIRING_REL_TOL * lattice.max_length
    edges = boundary_edges(elements)
    if not len(edges):
        raise PairingError("mesh has no boundary edges")
    bnodes = np.unique(edges)
    X = nodes[bnodes]
    tree = cKDTree(X)

    rows, cols = [], []
    for T in lattice.translations():
        hits = tree.query_ball_point(X + T, r=tol)
        for i, found in enumerate(hits):
            for j in found:
                rows.append(i)
                cols.append(j)
    if not rows:
        raise PairingError("no boundary node has a lattice-translated partner; "
                           "check the LATTICE section against the mesh")
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(bnodes),) * 2)
    n_comp, labels = connected_components(graph, directed=False)

    quantum = tol
    members = {}
    for local, label in enumerate(labels):
        members.setdefault(label, []).append(local)

    negative, positive, translations, coefficients, classes = [], [], [], [], []
    for label in sorted(members, key=lambda lb: min(bnodes[i] for i in members[lb])):
        local = members[label]
        if len(local) < 2:
            continue
        ordered = sorted(local, key=lambda i: (round(X[i, 0] / quantum),
                                               round(X[i, 1] / quantum)))
        master = ordered[0]
        classes.append(tuple(int(bnodes[i]) for i in ordered))
        for slave in ordered[1:]:
            c = lattice.coefficients(X[slave] - X[master])
            negative.append(bnodes[master])
            positive.append(bnodes[slave])
            coefficients.append(c)
            translations.append(c[0] * lattice.a1 + c[1] * lattice.a2)

    order = np.lexsort((positive, negative))
    pairing = Pairing(negative=np.array(negative, dtype=int)[order],
                      positive=np.array(positive, dtype=int)[order],
                      translations=np.array(translations, dtype=float)[order],
                      coefficients=np.array(coefficients, dtype=int)[order],
                      classes=tuple(classes))
    _check_pairing(pairing, nodes, edges, tol)
    LOG.debug(f"paired {pairing.m} boundary nodes in {len(classes)} classes")
    return pairing


def _check_pairing(pairing: Pairing, nodes, edges, tol):
    """Detect duplicate constraints and boundary nodes left without a partner."""
    keys = set(zip(pairing.negative.tolist(), pairing.positive.tolist()))
    if len(keys) != pairing.m or len(set(pairing.positive.tolist())) != pairing.m:
        raise PairingError("duplicate periodic constraint after corner deduplication")
    if np.any(pairing.negative == pairing.positive):
        raise PairingError("node paired with itself")
    if set(pairing.negative.tolist()) & set(pairing.positive.tolist()):
        raise PairingError("node is both master and slave")

    partners = {}
    for cls in pairing.classes:
        for n in cls:
            partners[n] = [nodes[o] - nodes[n] for o in cls if o != n]
    a, b = nodes[edges[:, 0]], nodes[edges[:, 1]]
    for i, j in edges:
        for n, other in ((i, j), (j, i)):
            if n not in partners or other in partners:
                continue
            mid = 0.5 * (nodes[n] + nodes[other])
            for T in partners[n]:
                dist = _point_segment_distance(np.repeat((mid + T)[None], len(a), 0), a, b)
                if np.min(dist) < tol:
                    raise PairingError(f"boundary node {other} at {nodes[other].tolist()} "
                                       f"has no periodic partner")


def assemble_constraints(pairing: Pairing, n_nodes: int, fixed_node: int) -> ConstraintOperators:
    """
    Build A1, A2 and L_M. Rows of A2 interleave the two displacement
    components of each pair, L_M rows follow the same order.
    """
    N = 2 * n_nodes
    A1 = csr_matrix((np.ones(2), ([0, 1], [2 * fixed_node, 2 * fixed_node + 1])), shape=(2, N))
    m = pairing.m
    rows = np.repeat(np.arange(2 * m), 2)
    cols = np.empty(4 * m, dtype=int)
    vals = np.tile([1.0, -1.0], 2 * m)
    cols[0::4] = 2 * pairing.positive
    cols[1::4] = 2 * pairing.negative
    cols[2::4] = 2 * pairing.positive + 1
    cols[3::4] = 2 * pairing.negative + 1
    A2 = csr_matrix((vals, (rows, cols)), shape=(2 * m, N))
    L_M = np.zeros((2 * m, 4))
    L_M[0::2, 0] = pairing.translations[:, 0]
    L_M[0::2, 2] = pairing.translations[:, 1]
    L_M[1::2, 1] = pairing.translations[:, 0]
    L_M[1::2, 3] = pairing.translations[:, 1]
    return ConstraintOperators(A1=A1, A2=A2, L_M=L_M)
