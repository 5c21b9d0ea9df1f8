"""
RVE meshes: container type, text file format, generators and tiling.

Mesh file sections (one record per line, '#' starts a comment):

    LATTICE
    a1x a1y a2x a2y
    NODES
    id x y
    ELEMENTS
    id kind mat n1 .. nk        (kind Q4 / Q4_disp or Q9 / Q9P3_mixed)
    FIXED
    id                          (optional)

Pairing is always recomputed from geometry, never read.
"""
import math
import os
import re
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from ovos_utils.log import LOG
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from rve_stability.errors import MeshGenerationError, MeshParseError
from rve_stability.lattice import LatticeSpec
from rve_stability.pairing import (ConstraintOperators, Pairing,
                                   assemble_constraints, build_pairing)

ELEMENT_KINDS = {"Q4": "Q4", "Q4_disp": "Q4", "Q9": "Q9", "Q9P3_mixed": "Q9"}
NODES_PER_KIND = {"Q4": 4, "Q9": 9}


@dataclass(frozen=True)
class Element:
    connectivity: Tuple[int, ...]
    kind: str
    material: int


@dataclass(eq=False)
class RveMesh:
    nodes: np.ndarray
    elements: List[Element]
    lattice: LatticeSpec
    fixed_node: Optional[int] = None
    pairing: Optional[Pairing] = None
    node_ids: Optional[np.ndarray] = None
    _constraints: Optional[ConstraintOperators] = field(default=None, repr=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        if self.fixed_node is None:
            self.fixed_node = default_fixed_node(self)
        if self.node_ids is None:
            self.node_ids = np.arange(1, len(self.nodes) + 1)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_dofs(self) -> int:
        return 2 * len(self.nodes)

    @property
    def volume(self) -> float:
        """Cell area (unit thickness) of the periodic lattice of this RVE."""
        return self.lattice.area

    @property
    def materials(self) -> List[int]:
        return sorted({el.material for el in self.elements})

    @property
    def constraints(self) -> ConstraintOperators:
        if self._constraints is None:
            if self.pairing is None:
                self.paired()
            self._constraints = assemble_constraints(self.pairing, self.n_nodes,
                                                     self.fixed_node)
        return self._constraints

    def paired(self, tol: float = None) -> "RveMesh":
        """Build the periodic pairing in place and return self."""
        self.pairing = build_pairing(self.nodes, self.elements, self.lattice, tol)
        self._constraints = None
        return self

    def with_fixed_node(self, node: int) -> "RveMesh":
        return replace(self, fixed_node=int(node), _constraints=None)

    def affine(self, F_bar) -> np.ndarray:
        """Displacements u = (F - I) X for a 4-vector F in (11, 21, 12, 22) order."""
        F = np.asarray(F_bar, dtype=float)
        G = np.array([[F[0] - 1.0, F[2]], [F[1], F[3] - 1.0]])
        return (self.nodes @ G.T).ravel()


def element_area(coords: np.ndarray) -> float:
    """Signed area of the corner polygon."""
    x, y = coords[:4, 0], coords[:4, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def default_fixed_node(mesh: RveMesh) -> int:
    """Node nearest to the centroid of the solid region."""
    areas, centers = [], []
    for el in mesh.elements:
        c = mesh.nodes[list(el.connectivity[:4])]
        areas.append(abs(element_area(c)))
        centers.append(c.mean(axis=0))
    centroid = np.average(np.array(centers), axis=0, weights=np.array(areas))
    _, idx = cKDTree(mesh.nodes).query(centroid)
    return int(idx)


def _reverse(conn: Sequence[int], kind: str) -> Tuple[int, ...]:
    if kind == "Q4":
        return conn[0], conn[3], conn[2], conn[1]
    return (conn[0], conn[3], conn[2], conn[1],
            conn[7], conn[6], conn[5], conn[4], conn[8])


def _orient(nodes: np.ndarray, conn: Sequence[int], kind: str) -> Tuple[int, ...]:
    conn = tuple(int(c) for c in conn)
    if element_area(nodes[list(conn[:4])]) < 0:
        return _reverse(conn, kind)
    return conn


def merge_nodes(points: np.ndarray, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Merge coincident points.
    @return: (unique points in first-occurrence order, map old index -> new index)
    """
    pairs = cKDTree(points).query_pairs(tol, output_type="ndarray")
    n = len(points)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    first = {}
    for i, lb in enumerate(labels):
        first.setdefault(lb, len(first))
    remap = np.array([first[lb] for lb in labels])
    unique = np.zeros((len(first), 2))
    seen = np.zeros(len(first), dtype=bool)
    for i, new in enumerate(remap):
        if not seen[new]:
            unique[new] = points[i]
            seen[new] = True
    return unique, remap


def _grid_elements(index: np.ndarray, kind: str) -> List[Tuple[int, ...]]:
    """Connectivities from a node index grid (n1+1, n2+1) or, for Q9, (2n1+1, 2n2+1)."""
    step = 2 if kind == "Q9" else 1
    out = []
    for a in range(0, index.shape[0] - 1, step):
        for b in range(0, index.shape[1] - 1, step):
            if kind == "Q4":
                out.append((index[a, b], index[a + 1, b], index[a + 1, b + 1], index[a, b + 1]))
            else:
                out.append((index[a, b], index[a + 2, b], index[a + 2, b + 2], index[a, b + 2],
                            index[a + 1, b], index[a + 2, b + 1], index[a + 1, b + 2],
                            index[a, b + 1], index[a + 1, b + 1]))
    return out


def _assemble_blocks(blocks, kind: str, lattice: LatticeSpec) -> RveMesh:
    """Merge point grids [(grid (p, q, 2), material)] into one conforming mesh."""
    points, conns, mats, offset = [], [], [], 0
    for grid, material in blocks:
        p, q = grid.shape[:2]
        index = offset + np.arange(p * q).reshape(p, q)
        points.append(grid.reshape(-1, 2))
        for conn in _grid_elements(index, kind):
            conns.append(conn)
            mats.append(material)
        offset += p * q
    tol = 1e-9 * lattice.max_length
    nodes, remap = merge_nodes(np.vstack(points), tol)
    elements = [Element(_orient(nodes, [remap[c] for c in conn], kind), kind, m)
                for conn, m in zip(conns, mats)]
    return RveMesh(nodes=nodes, elements=elements, lattice=lattice)


def structured_grid(width: float, height: float, nx: int, ny: int,
                    kind: str = "Q4", material: int = 1) -> RveMesh:
    """Rectangular cell centered at the origin, nx by ny elements."""
    kind = ELEMENT_KINDS[kind]
    s = 2 if kind == "Q9" else 1
    xs = np.linspace(-0.5 * width, 0.5 * width, s * nx + 1)
    ys = np.linspace(-0.5 * height, 0.5 * height, s * ny + 1)
    grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
    lattice = LatticeSpec([width, 0.0], [0.0, height])
    return _assemble_blocks([(grid, material)], kind, lattice)


def _side_points(width, height, n, side: int, s: int) -> np.ndarray:
    """Points along one cell side, counter-clockwise, s*n+1 of them."""
    t = np.linspace(0.0, 1.0, s * n + 1)
    w, h = 0.5 * width, 0.5 * height
    corners = np.array([[-w, -h], [w, -h], [w, h], [-w, h]])
    a, b = corners[side], corners[(side + 1) % 4]
    return a + t[:, None] * (b - a)


def _ring(inner: np.ndarray, outer: np.ndarray, layers: int, s: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, s * layers + 1)
    return inner[:, None, :] + t[None, :, None] * (outer - inner)[:, None, :]


def generate_hole_mesh(width: float = 1.0, height: float = 1.0, radius: float = 0.0,
                       center: Sequence[float] = (0.0, 0.0), feature: str = "hole",
                       target_elements: int = 400, kind: str = "Q4",
                       matrix_material: int = 1, inclusion_material: int = 2,
                       divisions: Optional[int] = None,
                       layers: Optional[int] = None) -> RveMesh:
    """
    Rectangular cell with one circular hole or inclusion, meshed as an O-grid.

    The cell boundary is split into four sides with `divisions` elements each,
    every side point is joined to the circle along a straight line cut into
    `layers` elements. Opposite sides carry identical node layouts so the
    mesh is always pairing-compatible. An inclusion additionally fills the
    circle with a central square and four transition blocks.
    @return: RveMesh (pairing not yet built)
    """
    kind = ELEMENT_KINDS.get(kind)
    if kind is None:
        raise MeshGenerationError("unknown element kind")
    if feature not in ("hole", "inclusion"):
        raise MeshGenerationError(f"unknown feature '{feature}'")
    if radius < 0 or width <= 0 or height <= 0:
        raise MeshGenerationError("negative radius or empty cell")
    if radius == 0:
        n = max(1, int(round(math.sqrt(target_elements))))
        return structured_grid(width, height, n, n, kind, matrix_material)
    c = np.asarray(center, dtype=float)
    if abs(c[0]) + radius >= 0.5 * width or abs(c[1]) + radius >= 0.5 * height:
        raise MeshGenerationError(f"feature of radius {radius} at {c.tolist()} "
                                  f"does not fit strictly inside the cell")

    if divisions is None:
        share = 0.5 if feature == "hole" else 0.35
        divisions = max(2, int(round(math.sqrt(share * target_elements))))
    if layers is None:
        layers = max(1, divisions // 2)
    s = 2 if kind == "Q9" else 1

    blocks = []
    for side in range(4):
        outer = _side_points(width, height, divisions, side, s)
        d = outer - c
        circle = c + radius * d / np.linalg.norm(d, axis=1)[:, None]
        blocks.append((_ring(circle, outer, layers, s), matrix_material))
        if feature == "inclusion":
            half = 0.4 * radius
            inner = c + _side_points(2 * half, 2 * half, divisions, side, s)
            blocks.append((_ring(inner, circle, layers, s), inclusion_material))
    if feature == "inclusion":
        half = 0.4 * radius
        xs = np.linspace(-half, half, s * divisions + 1) + c[0]
        ys = np.linspace(-half, half, s * divisions + 1) + c[1]
        core = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
        blocks.append((core, inclusion_material))

    mesh = _assemble_blocks(blocks, kind, LatticeSpec([width, 0.0], [0.0, height]))
    LOG.debug(f"generated {feature} mesh: {mesh.n_nodes} nodes, "
              f"{len(mesh.elements)} {kind} elements")
    return mesh


def tile_mesh(mesh: RveMesh, n1: int, n2: int) -> RveMesh:
    """Replicate a cell mesh n1 times along a1 and n2 times along a2."""
    if n1 < 1 or n2 < 1:
        raise MeshGenerationError("tiling counts must be positive")
    points, elements = [], []
    n = mesh.n_nodes
    for i in range(n1):
        for j in range(n2):
            block = len(points)
            points.append(mesh.nodes + i * mesh.lattice.a1 + j * mesh.lattice.a2)
            for el in mesh.elements:
                elements.append((tuple(c + block * n for c in el.connectivity),
                                 el.kind, el.material))
    nodes, remap = merge_nodes(np.vstack(points), 1e-9 * mesh.lattice.max_length)
    merged = [Element(tuple(int(remap[c]) for c in conn), kind, mat)
              for conn, kind, mat in elements]
    return RveMesh(nodes=nodes, elements=merged, lattice=mesh.lattice.scaled(n1, n2))


_TOKEN = re.compile(r"\S+")
_SECTIONS = ("NODES", "ELEMENTS", "LATTICE", "FIXED")


def _convert(token: Tuple[str, int], conv, line_no: int, path: Optional[str]):
    text, col = token
    try:
        return conv(text)
    except ValueError:
        raise MeshParseError(f"cannot read '{text}' as {conv.__name__}", line_no, col, path)


def read_mesh(path: str, tol: float = None) -> RveMesh:
    with open(path) as f:
        text = f.read()
    return parse_mesh(text, path=path, tol=tol)


def parse_mesh(text: str, path: str = None, tol: float = None) -> RveMesh:
    """
    Parse the mesh text format and build the pairing.
    @raise MeshParseError: with line and column of the offending token
    """
    section = None
    lattice, fixed = None, None
    node_rows: Dict[int, Tuple[float, float]] = {}
    elem_rows = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        tokens = [(m.group(), m.start() + 1) for m in _TOKEN.finditer(line)]
        if not tokens:
            continue
        col = tokens[0][1]
        if len(tokens) == 1 and tokens[0][0].upper() in _SECTIONS:
            section = tokens[0][0].upper()
            continue
        if section is None:
            raise MeshParseError("data before any section header", line_no, col, path)
        if section == "NODES":
            if len(tokens) != 3:
                raise MeshParseError("node record needs 'id x y'", line_no, col, path)
            nid = _convert(tokens[0], int, line_no, path)
            if nid in node_rows:
                raise MeshParseError(f"duplicate node id {nid}", line_no, col, path)
            node_rows[nid] = tuple(_convert(t, float, line_no, path) for t in tokens[1:])
        elif section == "LATTICE":
            if len(tokens) != 4:
                raise MeshParseError("lattice record needs 'a1x a1y a2x a2y'",
                                     line_no, col, path)
            v = [_convert(t, float, line_no, path) for t in tokens]
            lattice = LatticeSpec(v[:2], v[2:])
        elif section == "FIXED":
            fixed = (_convert(tokens[0], int, line_no, path), line_no, col)
        else:
            if len(tokens) < 3:
                raise MeshParseError("element record needs 'id kind mat n1 ..'",
                                     line_no, col, path)
            kind = ELEMENT_KINDS.get(tokens[1][0])
            if kind is None:
                raise MeshParseError(f"unknown element kind '{tokens[1][0]}'",
                                     line_no, tokens[1][1], path)
            conn = tokens[3:]
            if len(conn) != NODES_PER_KIND[kind]:
                raise MeshParseError(f"{kind} element needs {NODES_PER_KIND[kind]} "
                                     f"nodes, got {len(conn)}", line_no, col, path)
            _convert(tokens[0], int, line_no, path)
            mat = _convert(tokens[2], int, line_no, path)
            ids = [(_convert(t, int, line_no, path), t[1]) for t in conn]
            elem_rows.append((ids, kind, mat, line_no))
    if lattice is None:
        raise MeshParseError("missing LATTICE section", 0, 0, path)
    if not node_rows or not elem_rows:
        raise MeshParseError("mesh needs NODES and ELEMENTS", 0, 0, path)

    ids = np.array(sorted(node_rows))
    index = {nid: i for i, nid in enumerate(ids)}
    nodes = np.array([node_rows[nid] for nid in ids])
    elements = []
    for conn, kind, mat, line_no in elem_rows:
        for nid, col in conn:
            if nid not in index:
                raise MeshParseError(f"unknown node id {nid}", line_no, col, path)
        elements.append(Element(tuple(index[nid] for nid, _ in conn), kind, mat))
    fixed_node = None
    if fixed is not None:
        if fixed[0] not in index:
            raise MeshParseError(f"unknown fixed node id {fixed[0]}", fixed[1], fixed[2], path)
        fixed_node = index[fixed[0]]
    mesh = RveMesh(nodes=nodes, elements=elements, lattice=lattice,
                   fixed_node=fixed_node, node_ids=ids)
    return mesh.paired(tol)


def format_mesh(mesh: RveMesh) -> str:
    ids = mesh.node_ids
    lines = ["# rve-stability mesh", "LATTICE",
             " ".join(repr(float(v)) for v in (*mesh.lattice.a1, *mesh.lattice.a2)),
             "NODES"]
    lines += [f"{ids[i]} {x!r} {y!r}" for i, (x, y) in enumerate(mesh.nodes.tolist())]
    lines.append("ELEMENTS")
    for e, el in enumerate(mesh.elements, start=1):
        conn = " ".join(str(ids[c]) for c in el.connectivity)
        lines.append(f"{e} {el.kind} {el.material} {conn}")
    lines += ["FIXED", str(ids[mesh.fixed_node])]
    return "\n".join(lines) + "\n"


def write_mesh(mesh: RveMesh, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        f.write(format_mesh(mesh))
    return path
