"""
Bloch wave stability of the periodic cell.

Positive-side (slave) DOFs follow their negative-side master through
v_b = M(k) v_a with one phase e^{2 pi i (k1 c1 + k2 c2)} per pair, (c1, c2)
being the lattice coordinates of the pair translation. The smallest eigenvalue
beta_k of K_T restricted to those Bloch waves is computed by one of

    cond1      condensation of v_b            K_hat [v_a; v_i] = beta G [v_a; v_i]
    cond2      condensation of v_b and v_i    K_hat v_a = beta D v_a
    nullspace  projection on N(C(k))          Q2* K_T Q2 z = beta z

The metric matrices G and D only rescale the spectrum, they are left out
unless `include_metric` is set. At k = 0 one node is fixed to remove the rigid
translations.
"""
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from ovos_utils.log import LOG
from scipy.linalg import eigh, qr
from scipy.sparse import coo_matrix, csc_matrix, csr_matrix, diags, issparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh, splu
from scipy.spatial import cKDTree

from rve_stability.assembly import element_dofs
from rve_stability.constants import (BETA_ZERO_THRESHOLD, DENSE_EIGEN_LIMIT,
                                     MODE_DROP_RATIO, MULTIPLICITY_TOL,
                                     ORIGIN_JUMP_RATIO, SINGULAR_PIVOT_RATIO)
from rve_stability.errors import ConstraintRankError, EigenSolverError

METHODS = ("cond1", "cond2", "nullspace")


def norm_inf(K) -> float:
    """Infinity norm (max absolute row sum) of a sparse or dense matrix."""
    if issparse(K):
        return float(abs(K).sum(axis=1).max())
    return float(np.max(np.sum(np.abs(K), axis=1)))


def conjugate(k) -> Tuple[float, float]:
    """Wavevector whose Bloch spectrum equals the one at k, for real K_T."""
    k1, k2 = (-np.asarray(k, dtype=float)) % 1.0
    return float(k1), float(k2)


@dataclass(frozen=True, eq=False)
class DofPartition:
    a: np.ndarray          # master DOFs
    b: np.ndarray          # slave DOFs, two per pair
    i: np.ndarray          # interior DOFs
    b_master: np.ndarray   # position in `a` of the master of each slave DOF
    b_coeff: np.ndarray    # (nb, 2) lattice coordinates of each slave translation
    fixed: np.ndarray      # DOFs pinned at k = 0, mapped onto masters
    n_dofs: int


def dof_partition(mesh) -> DofPartition:
    if mesh.pairing is None:
        mesh.paired()
    pairing = mesh.pairing
    masters = np.unique(pairing.negative)
    slot = {int(n): j for j, n in enumerate(masters)}
    a = element_dofs(masters)
    b = element_dofs(pairing.positive)
    b_master = np.array([2 * slot[int(n)] + c for n in pairing.negative for c in (0, 1)],
                        dtype=int)
    b_coeff = np.repeat(pairing.coefficients, 2, axis=0)
    i = np.setdiff1d(np.arange(mesh.n_dofs), np.concatenate([a, b]))

    fixed_node = int(mesh.fixed_node)
    hit = np.flatnonzero(pairing.positive == fixed_node)
    if hit.size:
        fixed_node = int(pairing.negative[hit[0]])
    return DofPartition(a=a, b=b, i=i, b_master=b_master, b_coeff=b_coeff,
                        fixed=element_dofs([fixed_node]), n_dofs=mesh.n_dofs)


@dataclass(frozen=True, eq=False)
class BlochOperator:
    k: Tuple[float, float]
    M: csr_matrix          # nb x na, complex
    phases: np.ndarray     # one per slave DOF
    partition: DofPartition

    @property
    def at_origin(self) -> bool:
        return self.k[0] == 0.0 and self.k[1] == 0.0

    @property
    def master_multiplicity(self) -> np.ndarray:
        """Diagonal of M* M, the number of slaves following each master DOF."""
        return np.asarray((abs(self.M).power(2)).sum(axis=0)).ravel()

    def kept(self, fix: bool) -> Tuple[np.ndarray, np.ndarray]:
        """Boolean masks over a and i left free by the translation fix."""
        part = self.partition
        keep_a = np.ones(part.a.size, dtype=bool)
        keep_i = np.ones(part.i.size, dtype=bool)
        if fix:
            keep_a &= ~np.isin(part.a, part.fixed)
            keep_i &= ~np.isin(part.i, part.fixed)
        return keep_a, keep_i

    def basis(self, fix: bool = False) -> csr_matrix:
        """
        H mapping reduced coordinates [v_a; v_i] to the full Bloch wave.
        Columns have disjoint supports, so H* H is diagonal.
        """
        part = self.partition
        na, ni = part.a.size, part.i.size
        rows = np.concatenate([part.a, part.b, part.i])
        cols = np.concatenate([np.arange(na), part.b_master, na + np.arange(ni)])
        vals = np.concatenate([np.ones(na), self.phases, np.ones(ni)]).astype(complex)
        H = coo_matrix((vals, (rows, cols)), shape=(part.n_dofs, na + ni)).tocsc()
        keep_a, keep_i = self.kept(fix)
        return H[:, np.concatenate([keep_a, keep_i])].tocsr()


def bloch_operator(mesh, k, partition: Optional[DofPartition] = None) -> BlochOperator:
    """
    M(k) of the mesh pairing. The phase of pair q is e^{i k . L_q}, which for
    L_q = c1 a1 + c2 a2 is evaluated exactly as e^{2 pi i (k1 c1 + k2 c2)}.
    """
    part = partition or dof_partition(mesh)
    k = (float(k[0]), float(k[1]))
    phases = np.exp(2j * np.pi * (part.b_coeff @ np.array(k)))
    if k == (0.0, 0.0):
        phases = np.ones(part.b.size, dtype=complex)
    M = csr_matrix((phases, (np.arange(part.b.size), part.b_master)),
                   shape=(part.b.size, part.a.size))
    return BlochOperator(k=k, M=M, phases=phases, partition=part)


@dataclass(eq=False)
class BlochEigen:
    k: Tuple[float, float]
    beta: float
    values: np.ndarray    # lowest eigenvalues found, ascending
    mode: np.ndarray      # full complex Bloch wave of the lowest eigenvalue
    method: str


def lowest_eigenpairs(A, n: int = 1, B=None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Smallest eigenpairs of a Hermitian (generalized) problem, dense below
    DENSE_EIGEN_LIMIT and shift-invert about a slightly negative shift above.
    """
    dim = A.shape[0]
    n = max(1, min(n, dim))
    try:
        if dim <= DENSE_EIGEN_LIMIT or n >= dim - 1:
            Ad = A.toarray() if issparse(A) else np.asarray(A)
            Bd = None if B is None else (B.toarray() if issparse(B) else np.asarray(B))
            vals, vecs = eigh(Ad, Bd, subset_by_index=[0, n - 1])
        else:
            sigma = -1e-6 * norm_inf(A)
            vals, vecs = eigsh(A, k=n, M=B, sigma=sigma, which="LM", tol=1e-10)
            order = np.argsort(vals.real)
            vals, vecs = vals[order], vecs[:, order]
    except (np.linalg.LinAlgError, ArpackError, ArpackNoConvergence, RuntimeError) as e:
        raise EigenSolverError(f"eigen solve of a {dim}x{dim} Bloch problem failed: {e}")
    return np.real(vals), vecs


def _hermitian(A):
    return 0.5 * (A + A.conj().T)


def beta_condensation_1(K_T, op: BlochOperator, fix_at_origin: bool = True,
                        include_metric: bool = False, n_eigs: int = 1) -> BlochEigen:
    """Condense the positive-side DOFs: K_hat = H* K_T H."""
    H = op.basis(fix_at_origin and op.at_origin)
    K_hat = _hermitian((H.conj().T @ K_T @ H).tocsc())
    if include_metric:
        g = np.real((H.conj().T @ H).diagonal())
        s = diags(1.0 / np.sqrt(g))
        vals, Y = lowest_eigenpairs(_hermitian(s @ K_hat @ s), n_eigs)
        Z = s @ Y
    else:
        vals, Z = lowest_eigenpairs(K_hat, n_eigs)
    modes = H @ Z
    return BlochEigen(k=op.k, beta=float(vals[0]), values=vals, mode=modes[:, 0],
                      method="cond1")


def factorize_interior(K_T, op: BlochOperator, fix: bool):
    """LU of K_ii for condensation 2, None when K_ii is (numerically) singular."""
    part = op.partition
    _, keep_i = op.kept(fix)
    i = part.i[keep_i]
    Kii = csc_matrix(K_T[i][:, i])
    try:
        lu = splu(Kii)
    except RuntimeError:
        return None
    pivots = np.abs(lu.U.diagonal())
    if pivots.size and pivots.min() < SINGULAR_PIVOT_RATIO * pivots.max():
        return None
    return lu


def beta_condensation_2(K_T, op: BlochOperator, fix_at_origin: bool = True,
                        include_metric: bool = False, n_eigs: int = 1,
                        kii_lu=None) -> BlochEigen:
    """
    Condense the interior DOFs as well through W = -K_ii^-1 (K_ia + K_ib M).
    Falls back to condensation 1 when K_ii is singular.
    """
    part = op.partition
    fix = fix_at_origin and op.at_origin
    keep_a, keep_i = op.kept(fix)
    a, i, b = part.a[keep_a], part.i[keep_i], part.b
    M = op.M[:, keep_a]
    lu = kii_lu if kii_lu is not None else factorize_interior(K_T, op, fix)
    if lu is None:
        LOG.warning(f"K_ii is singular at k={op.k}, falling back to condensation 1")
        return beta_condensation_1(K_T, op, fix_at_origin, include_metric, n_eigs)

    K = csr_matrix(K_T)
    Kaa, Kab, Kai = K[a][:, a], K[a][:, b], K[a][:, i]
    Kba, Kbb, Kbi = K[b][:, a], K[b][:, b], K[b][:, i]
    Kia, Kib = K[i][:, a], K[i][:, b]
    Mh = M.conj().T
    R = (Kia + Kib @ M).toarray()
    W = -(lu.solve(np.ascontiguousarray(R.real))
          + 1j * lu.solve(np.ascontiguousarray(R.imag)))
    K_hat = (Kaa + Kab @ M + Mh @ Kba + Mh @ Kbb @ M).toarray() + (Kai + Mh @ Kbi) @ W
    K_hat = _hermitian(K_hat)
    D = None
    if include_metric:
        D = _hermitian(np.eye(a.size) + (Mh @ M).toarray() + W.conj().T @ W)
    vals, Va = lowest_eigenpairs(K_hat, n_eigs, D)
    modes = np.zeros((part.n_dofs, Va.shape[1]), dtype=complex)
    modes[a] = Va
    modes[b] = M @ Va
    modes[i] = W @ Va
    return BlochEigen(k=op.k, beta=float(vals[0]), values=vals, mode=modes[:, 0],
                      method="cond2")


def bloch_constraints(op: BlochOperator, fix_at_origin: bool = True) -> csr_matrix:
    """
    C(k) with C v = 0 for Bloch waves: v_b - M v_a = 0, plus the fixed node
    rows at k = 0. rank(C) = 2m (2m + 2 with the fix).
    """
    part = op.partition
    nb = part.b.size
    rows = np.concatenate([np.arange(nb), np.arange(nb)])
    cols = np.concatenate([part.b, part.a[part.b_master]])
    vals = np.concatenate([np.ones(nb), -op.phases]).astype(complex)
    n_rows = nb
    if fix_at_origin and op.at_origin:
        nf = part.fixed.size
        rows = np.concatenate([rows, nb + np.arange(nf)])
        cols = np.concatenate([cols, part.fixed])
        vals = np.concatenate([vals, np.ones(nf)])
        n_rows += nf
    return coo_matrix((vals, (rows, cols)), shape=(n_rows, part.n_dofs)).tocsr()


def null_space_basis(C: csr_matrix, rank_tol: float = 1e-10) -> csc_matrix:
    """
    Orthonormal basis Q2 of N(C) from the QR factorization of C*.

    C couples only the DOFs of one periodic equivalence class, so C* is QR
    factorized block by block over the connected components of the constraint
    graph and Q2 stays sparse. Unconstrained DOFs contribute unit columns.
    @raise ConstraintRankError: if C is rank deficient
    """
    C = csr_matrix(C)
    n_rows, N = C.shape
    pattern = abs(C)
    graph = (pattern.T @ pattern).tocsr()
    _, labels = connected_components(graph, directed=False)
    row_nnz = np.diff(C.indptr)
    if np.any(row_nnz == 0):
        raise ConstraintRankError("constraint matrix has an empty row")
    row_label = labels[C.indices[C.indptr[:-1]]]

    dofs_of: Dict[int, List[int]] = {}
    for dof, lb in enumerate(labels):
        dofs_of.setdefault(int(lb), []).append(dof)
    rows_of: Dict[int, List[int]] = {}
    for r, lb in enumerate(row_label):
        rows_of.setdefault(int(lb), []).append(r)

    out_rows, out_cols, out_vals = [], [], []
    col = 0
    for lb in sorted(dofs_of, key=lambda x: dofs_of[x][0]):
        dofs = np.array(dofs_of[lb])
        rows = rows_of.get(lb)
        if not rows:
            out_rows.append(dofs)
            out_cols.append(col + np.arange(dofs.size))
            out_vals.append(np.ones(dofs.size, dtype=complex))
            col += dofs.size
            continue
        block = C[rows][:, dofs].toarray()
        r = len(rows)
        if r > dofs.size:
            raise ConstraintRankError(f"{r} constraints on {dofs.size} DOFs")
        Q, R = qr(block.conj().T)
        d = np.abs(np.diag(R))
        if d.min() <= rank_tol * max(1.0, d.max()):
            raise ConstraintRankError(f"rank deficient constraint block on DOFs "
                                      f"{dofs.tolist()}")
        Q2 = Q[:, r:]
        if Q2.shape[1]:
            rr, cc = np.nonzero(np.abs(Q2) > 0.0)
            out_rows.append(dofs[rr])
            out_cols.append(col + cc)
            out_vals.append(Q2[rr, cc])
            col += Q2.shape[1]
    if col != N - n_rows:
        raise ConstraintRankError(f"null space has dimension {col}, expected {N - n_rows}")
    return coo_matrix((np.concatenate(out_vals),
                       (np.concatenate(out_rows), np.concatenate(out_cols))),
                      shape=(N, col)).tocsc()


def beta_nullspace(K_T, C: csr_matrix, n_eigs: int = 1,
                   k: Tuple[float, float] = (0.0, 0.0)) -> BlochEigen:
    Q2 = null_space_basis(C)
    K_red = _hermitian((Q2.conj().T @ K_T @ Q2).tocsc())
    vals, Z = lowest_eigenpairs(K_red, n_eigs)
    modes = Q2 @ Z
    return BlochEigen(k=tuple(k), beta=float(vals[0]), values=vals, mode=modes[:, 0],
                      method="nullspace")


def recover_real_mode(v: np.ndarray, drop_ratio: float = MODE_DROP_RATIO) -> List[np.ndarray]:
    """
    Real buckling modes spanned by a complex Bloch eigenvector: its real and
    imaginary parts, each normalized, with a part dropped when its norm is
    below drop_ratio times the other one.
    """
    v = np.asarray(v)
    parts = [np.real(v).astype(float), np.imag(v).astype(float)]
    norms = [np.linalg.norm(p) for p in parts]
    out = []
    for p, n, other in zip(parts, norms, norms[::-1]):
        if n == 0.0 or n < drop_ratio * other:
            continue
        out.append(p / n)
    if len(out) < 2:
        LOG.debug("Bloch mode is real up to a phase, single real mode kept")
    return out


@dataclass(frozen=True)
class KGridSpec:
    """
    Uniform n x n grid over [0, 1)^2 plus n x n refinements of the zones
    (0, z] x [z, 1], [z, 1] x (0, z] and (0, z] x (0, z].
    """
    n_coarse: int = 100
    n_refined: int = 100
    zone: float = 0.01

    def points(self) -> np.ndarray:
        return build_kgrid(self)


def build_kgrid(spec: KGridSpec) -> np.ndarray:
    """Deduplicated wavevectors sorted lexicographically, origin included once."""
    coarse = np.arange(spec.n_coarse) / spec.n_coarse
    blocks = [np.array(np.meshgrid(coarse, coarse, indexing="ij")).reshape(2, -1).T]
    if spec.n_refined > 0 and spec.zone > 0:
        z = spec.zone
        small = np.linspace(0.0, z, spec.n_refined + 1)[1:]
        large = np.linspace(z, 1.0, spec.n_refined)
        for x, y in ((small, large), (large, small), (small, small)):
            blocks.append(np.array(np.meshgrid(x, y, indexing="ij")).reshape(2, -1).T)
    pts = np.vstack(blocks) % 1.0
    pts = np.unique(np.round(pts, 12), axis=0)
    return pts


def origin_samples(grid: np.ndarray) -> np.ndarray:
    """The three grid points closest to the origin along k1, k2 and the diagonal."""
    positive = grid[grid > 0.0]
    d = float(positive.min()) if positive.size else 0.01
    return np.array([[d, 0.0], [0.0, d], [d, d]])


def neighborhood(grid: np.ndarray, k, radius: float) -> np.ndarray:
    """Grid points within `radius` of k or of its conjugate, periodic in [0, 1)^2."""
    tree = cKDTree(grid, boxsize=1.0 + 1e-12)
    hits = set(tree.query_ball_point(np.asarray(k) % 1.0, radius))
    hits |= set(tree.query_ball_point(np.array(conjugate(k)), radius))
    return grid[sorted(hits)]


class BlochAnalyzer:
    """
    beta_k evaluator for one converged tangent, shared read-only between sweep
    threads. Per-k operators are built on demand, the K_ii factors of
    condensation 2 are cached.
    """

    def __init__(self, mesh, K_T, method: str = "nullspace", include_metric: bool = False,
                 n_eigs: int = 1):
        if method not in METHODS:
            raise ValueError(f"unknown Bloch method {method}, expected one of {METHODS}")
        self.mesh = mesh
        self.K = csr_matrix(K_T)
        self.method = method
        self.include_metric = include_metric
        self.n_eigs = n_eigs
        self.partition = dof_partition(mesh)
        self.scale = norm_inf(self.K)
        self._kii: Dict[bool, object] = {}
        self._lock = threading.Lock()

    def operator(self, k) -> BlochOperator:
        return bloch_operator(self.mesh, k, self.partition)

    def _interior_factor(self, op: BlochOperator):
        fix = op.at_origin
        with self._lock:
            if fix not in self._kii:
                self._kii[fix] = factorize_interior(self.K, op, fix)
            return self._kii[fix]

    def evaluate(self, k, method: Optional[str] = None) -> BlochEigen:
        method = method or self.method
        op = self.operator(k)
        if method == "cond1":
            return beta_condensation_1(self.K, op, True, self.include_metric, self.n_eigs)
        if method == "cond2":
            return beta_condensation_2(self.K, op, True, self.include_metric, self.n_eigs,
                                       kii_lu=self._interior_factor(op))
        return beta_nullspace(self.K, bloch_constraints(op), self.n_eigs, k=op.k)

    def beta(self, k) -> float:
        return self.evaluate(k).beta


@dataclass(eq=False)
class BlochSurface:
    kpoints: np.ndarray               # (n, 2), lexicographic order
    betas: np.ndarray                 # (n,)
    k_min: Tuple[float, float]
    beta_min: float
    mode: np.ndarray                  # complex mode at k_min
    beta_origin: Optional[float] = None
    beta_near_origin: Optional[float] = None
    origin_continuous: Optional[bool] = None
    scale: float = 1.0
    method: str = "nullspace"
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def zero_threshold(self) -> float:
        return BETA_ZERO_THRESHOLD * self.scale

    def critical(self, tol: float = MULTIPLICITY_TOL) -> np.ndarray:
        """Grid wavevectors whose beta lies within tol * ||K_T|| of the minimum."""
        band = tol * self.scale
        return self.kpoints[self.betas <= self.beta_min + band]


def _map(fn, items: Sequence, threads: int) -> List:
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def sweep(analyzer: BlochAnalyzer, grid: np.ndarray, threads: int = 1,
          sample_origin: bool = True) -> BlochSurface:
    """
    beta_k over the wavevector grid. Results keep the grid order, ties of the
    minimum resolve to the lexicographically smallest k.
    """
    t0 = time.perf_counter()
    grid = np.asarray(grid, dtype=float)
    pts = [tuple(map(float, k)) for k in grid]
    betas = np.array(_map(analyzer.beta, pts, threads))
    j = int(np.argmin(betas))
    best = analyzer.evaluate(pts[j])
    surface = BlochSurface(kpoints=grid, betas=betas, k_min=pts[j], beta_min=float(betas[j]),
                           mode=best.mode, scale=analyzer.scale, method=analyzer.method)
    if sample_origin:
        origin = analyzer.beta((0.0, 0.0))
        near = min(_map(analyzer.beta, [tuple(p) for p in origin_samples(grid)], threads))
        spread = max(float(betas.max() - betas.min()), surface.zero_threshold)
        surface.beta_origin = origin
        surface.beta_near_origin = near
        surface.origin_continuous = abs(near - origin) <= ORIGIN_JUMP_RATIO * spread
    surface.timings["sweep"] = time.perf_counter() - t0
    LOG.debug(f"swept {len(pts)} wavevectors with {analyzer.method} in "
              f"{surface.timings['sweep']:.2f}s, min beta {surface.beta_min:.6e} "
              f"at k={surface.k_min}")
    return surface


def critical_wavevectors(surface: BlochSurface, tol: float = MULTIPLICITY_TOL,
                         spacing: Optional[float] = None) -> List[Tuple[float, float]]:
    """
    Distinct minimizers of the surface: near-minimal grid points are merged
    with their conjugates and clustered when adjacent on the grid.
    @return: one representative (lexicographically smallest) per cluster
    """
    pts = surface.critical(tol)
    if not len(pts):
        return []
    canon = np.array([min(tuple(p), conjugate(p)) for p in pts])
    canon = np.unique(np.round(canon, 12), axis=0)
    if spacing is None:
        diffs = np.diff(np.unique(surface.kpoints[:, 0]))
        spacing = float(diffs.max()) if diffs.size else 1.0
    tree = cKDTree(canon, boxsize=1.0 + 1e-12)
    pairs = tree.query_pairs(1.5 * spacing, output_type="ndarray")
    n = len(canon)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)) \
        if len(pairs) else coo_matrix((n, n))
    _, labels = connected_components(graph, directed=False)
    reps = {}
    for lb, p in zip(labels, canon):
        reps.setdefault(int(lb), tuple(float(x) for x in p))
    return sorted(reps.values())
