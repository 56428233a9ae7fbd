# -*- coding: utf-8 -*-
"""
sheaf.py - Graph and cellular sheaf data model
Validated immutable Graph/Sheaf types, coboundary assembly, cochain helpers,
subgraph restriction and the reluctance augmentation.

Conventions:
- edges are stored as (u, v) with u < v and oriented u -> v (tail u, head v)
- restriction blocks are keyed by the incident pair (vertex, edge_index)
- cochains are float64 1-D arrays stacked in vertex (or edge) order
"""

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import scipy.sparse as sp

from .config import config
from .errors import (
    DanglingEdge, InvalidGraph, LengthMismatch, MissingRestriction,
    NegativeGamma, NonFiniteEntry, ShapeMismatch,
)

Edge = Tuple[int, int]
Incidence = Tuple[int, int]  # (vertex, edge_index)


def _frozen(array: np.ndarray) -> np.ndarray:
    """Return a read-only float64 copy"""
    out = np.array(array, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


def _offsets(dims: Sequence[int]) -> np.ndarray:
    return np.concatenate(([0], np.cumsum(np.asarray(dims, dtype=np.int64)))).astype(np.int64)


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on vertices 0..n_vertices-1"""
    n_vertices: int
    edges: Tuple[Edge, ...] = ()

    def __post_init__(self):
        if self.n_vertices < 0:
            raise InvalidGraph(f"n_vertices must be >= 0, got {self.n_vertices}")
        canonical = []
        seen = set()
        for i, (a, b) in enumerate(self.edges):
            a, b = int(a), int(b)
            if a == b:
                raise InvalidGraph(f"edge {i} is a self-loop at vertex {a}")
            u, v = min(a, b), max(a, b)
            if u < 0 or v >= self.n_vertices:
                raise InvalidGraph(f"edge {i} = ({a}, {b}) has an endpoint outside 0..{self.n_vertices - 1}")
            if (u, v) in seen:
                raise InvalidGraph(f"edge {i} = ({u}, {v}) is a duplicate")
            seen.add((u, v))
            canonical.append((u, v))
        object.__setattr__(self, 'edges', tuple(canonical))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge_index(self, a: int, b: int) -> int:
        """Index of the edge {a, b}; order of endpoints is irrelevant"""
        key = (min(a, b), max(a, b))
        try:
            return self.edges.index(key)
        except ValueError:
            raise KeyError(f"no edge between {a} and {b}") from None

    def incident_edges(self, v: int) -> List[int]:
        return [i for i, (a, b) in enumerate(self.edges) if v in (a, b)]

    def induced_edges(self, vertices: Iterable[int]) -> List[int]:
        """Edges with both endpoints in the vertex set"""
        vs = set(vertices)
        return [i for i, (a, b) in enumerate(self.edges) if a in vs and b in vs]

    def to_networkx(self, edge_subset: Optional[Iterable[int]] = None) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n_vertices))
        chosen = range(self.n_edges) if edge_subset is None else edge_subset
        g.add_edges_from(self.edges[i] for i in chosen)
        return g

    @classmethod
    def path(cls, n: int) -> 'Graph':
        return cls(n, tuple((i, i + 1) for i in range(n - 1)))

    @classmethod
    def cycle(cls, n: int) -> 'Graph':
        return cls(n, tuple((i, (i + 1) % n) for i in range(n)))


@dataclass(frozen=True, eq=False)
class Sheaf:
    """
    Cellular sheaf on a graph.

    Attributes:
        graph: underlying graph
        vertex_dims: dim F(v) per vertex
        edge_dims: dim F(e) per edge
        restrictions: F_{v<=e} as edge_dims[e] x vertex_dims[v] blocks, keyed by (v, e)

    Build through build_sheaf() so that shapes and finiteness are validated.
    """
    graph: Graph
    vertex_dims: Tuple[int, ...]
    edge_dims: Tuple[int, ...]
    restrictions: Mapping[Incidence, np.ndarray] = field(repr=False)
    vertex_offsets: np.ndarray = field(init=False, repr=False)
    edge_offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'vertex_offsets', _offsets(self.vertex_dims))
        object.__setattr__(self, 'edge_offsets', _offsets(self.edge_dims))
        self.vertex_offsets.setflags(write=False)
        self.edge_offsets.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.graph.n_vertices

    @property
    def n_edges(self) -> int:
        return self.graph.n_edges

    @property
    def c0_dim(self) -> int:
        return int(self.vertex_offsets[-1])

    @property
    def c1_dim(self) -> int:
        return int(self.edge_offsets[-1])

    @property
    def orientation(self) -> Tuple[Edge, ...]:
        """(tail, head) per edge; canonical u < v gives u -> v"""
        return self.graph.edges

    def vertex_slice(self, v: int) -> slice:
        return slice(int(self.vertex_offsets[v]), int(self.vertex_offsets[v + 1]))

    def edge_slice(self, e: int) -> slice:
        return slice(int(self.edge_offsets[e]), int(self.edge_offsets[e + 1]))

    def vertex_indices(self, vertices: Iterable[int]) -> np.ndarray:
        """Cochain coordinates belonging to the given vertices, in the given order"""
        parts = [np.arange(self.vertex_offsets[v], self.vertex_offsets[v + 1]) for v in vertices]
        return np.concatenate(parts).astype(np.int64) if parts else np.zeros(0, dtype=np.int64)

    def edge_indices(self, edges: Iterable[int]) -> np.ndarray:
        parts = [np.arange(self.edge_offsets[e], self.edge_offsets[e + 1]) for e in edges]
        return np.concatenate(parts).astype(np.int64) if parts else np.zeros(0, dtype=np.int64)

    def restriction(self, v: int, e: int) -> np.ndarray:
        return self.restrictions[(v, e)]

    def edge_row(self, e: int) -> np.ndarray:
        """Gathered block row [-F_tail | F_head] of shape edge_dim x (dim tail + dim head)"""
        u, v = self.graph.edges[e]
        return np.hstack([-self.restrictions[(u, e)], self.restrictions[(v, e)]])

    def edge_vertex_indices(self, e: int) -> np.ndarray:
        """Cochain coordinates of the two endpoints of e, tail first (the x_e gather)"""
        u, v = self.graph.edges[e]
        return self.vertex_indices((u, v))

    def with_restrictions(self, restrictions: Mapping[Incidence, np.ndarray]) -> 'Sheaf':
        """Same stalks, new restriction blocks (validated)"""
        return build_sheaf(self.graph, self.vertex_dims, self.edge_dims, restrictions)


@dataclass(frozen=True, eq=False)
class CoboundaryMatrix:
    """
    Oriented block coboundary delta: C0 -> C1.

    Block row for e = u -> v holds +F_{v<=e} in v's column block and -F_{u<=e}
    in u's column block. matrix is dense up to config.dense_limit, CSR above.
    """
    matrix: object
    vertex_offsets: np.ndarray = field(repr=False)
    edge_offsets: np.ndarray = field(repr=False)
    orientation: Tuple[Edge, ...]

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.matrix.shape)

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def block(self, e: int, v: int) -> np.ndarray:
        rows = slice(int(self.edge_offsets[e]), int(self.edge_offsets[e + 1]))
        cols = slice(int(self.vertex_offsets[v]), int(self.vertex_offsets[v + 1]))
        sub = self.matrix[rows, cols]
        return sub.toarray() if sp.issparse(sub) else np.array(sub)

    def norm(self) -> float:
        """Spectral norm"""
        d = self.dense()
        return float(np.linalg.norm(d, 2)) if d.size else 0.0


# === Construction ===

def build_sheaf(
    graph: Graph,
    vertex_dims: Sequence[int],
    edge_dims: Sequence[int],
    restrictions: Mapping[Incidence, object],
) -> Sheaf:
    """
    Validate and assemble a Sheaf.

    Args:
        graph: underlying graph
        vertex_dims: stalk dimension per vertex (>= 0)
        edge_dims: stalk dimension per edge (>= 0)
        restrictions: {(v, e): edge_dims[e] x vertex_dims[v] array} for every incidence

    Raises:
        ShapeMismatch, MissingRestriction, NonFiniteEntry
    """
    vertex_dims = tuple(int(d) for d in vertex_dims)
    edge_dims = tuple(int(d) for d in edge_dims)
    if len(vertex_dims) != graph.n_vertices:
        raise ShapeMismatch(f"{len(vertex_dims)} vertex dims for {graph.n_vertices} vertices")
    if len(edge_dims) != graph.n_edges:
        raise ShapeMismatch(f"{len(edge_dims)} edge dims for {graph.n_edges} edges")
    if any(d < 0 for d in vertex_dims + edge_dims):
        raise ShapeMismatch("stalk dimensions must be nonnegative")

    blocks: Dict[Incidence, np.ndarray] = {}
    for e, (u, v) in enumerate(graph.edges):
        for w in (u, v):
            if (w, e) not in restrictions:
                raise MissingRestriction(f"no restriction block for vertex {w} on edge {e} = ({u}, {v})")
            block = np.asarray(restrictions[(w, e)], dtype=np.float64)
            expected = (edge_dims[e], vertex_dims[w])
            if block.ndim < 2 and block.size == expected[0] * expected[1]:
                block = block.reshape(expected)
            if block.shape != expected:
                raise ShapeMismatch(
                    f"block ({w}, {e}) has shape {block.shape}, expected {expected}")
            if not np.all(np.isfinite(block)):
                raise NonFiniteEntry(f"block ({w}, {e}) has non-finite entries")
            blocks[(w, e)] = _frozen(block)

    extra = set(restrictions) - set(blocks)
    if extra:
        raise MissingRestriction(f"blocks supplied for non-incident pairs: {sorted(extra)}")
    return Sheaf(graph=graph, vertex_dims=vertex_dims, edge_dims=edge_dims,
                 restrictions=MappingProxyType(blocks))


def constant_sheaf(graph: Graph, n: int = 1) -> Sheaf:
    """Constant R^n-sheaf: every stalk R^n, every restriction the identity"""
    if n < 0:
        raise ShapeMismatch(f"stalk dimension must be >= 0, got {n}")
    eye = np.eye(n)
    restrictions = {}
    for e, (u, v) in enumerate(graph.edges):
        restrictions[(u, e)] = eye
        restrictions[(v, e)] = eye
    return build_sheaf(graph, [n] * graph.n_vertices, [n] * graph.n_edges, restrictions)


def four_agent_sheaf() -> Sheaf:
    """
    The 4-vertex cyclic sheaf with vertex dims (1, 2, 1, 2) whose coboundary,
    under the canonical orientation, is
        [-2 | 1 -2 |  0 |  0  0]
        [ 0 | 1  1 | -1 |  0  0]
        [ 0 | 0  0 | -1 | -1  1]
        [ 0 | 0  0 |  0 |  0  1]
        [ 1 | 0  0 |  0 | -1  0]
    """
    graph = Graph(4, ((0, 1), (1, 2), (2, 3), (0, 3)))
    restrictions = {
        (0, 0): [[2.0]], (1, 0): [[1.0, -2.0]],
        (1, 1): [[-1.0, -1.0]], (2, 1): [[-1.0]],
        (2, 2): [[1.0]], (3, 2): [[-1.0, 1.0]],
        (0, 3): [[0.0], [-1.0]], (3, 3): [[0.0, 1.0], [-1.0, 0.0]],
    }
    return build_sheaf(graph, (1, 2, 1, 2), (1, 1, 1, 2), restrictions)


def polite_company_sheaf() -> Sheaf:
    """
    Four agents, all stalks R. Agents 0, 1 sit on the positive side, 2, 3 on the
    negative side; the negative side tells a polite lie (map -1) across the
    divide and is frank (map +1) among themselves. H0 is spanned by (1, 1, -1, -1).
    """
    graph = Graph(4, ((0, 1), (2, 3), (0, 2), (1, 3)))
    one, lie = [[1.0]], [[-1.0]]
    restrictions = {
        (0, 0): one, (1, 0): one,
        (2, 1): one, (3, 1): one,
        (0, 2): one, (2, 2): lie,
        (1, 3): one, (3, 3): lie,
    }
    return build_sheaf(graph, (1, 1, 1, 1), (1, 1, 1, 1), restrictions)


# === Coboundary ===

def coboundary(sheaf: Sheaf) -> CoboundaryMatrix:
    """Assemble delta with canonical orientation (dense or CSR by config.dense_limit)"""
    rows, cols = sheaf.c1_dim, sheaf.c0_dim
    sparse = max(rows, cols) > config.dense_limit

    if sparse:
        r_idx, c_idx, vals = [], [], []
    else:
        delta = np.zeros((rows, cols))

    for e, (u, v) in enumerate(sheaf.graph.edges):
        r0 = int(sheaf.edge_offsets[e])
        for w, sign in ((u, -1.0), (v, 1.0)):
            block = sign * sheaf.restrictions[(w, e)]
            c0 = int(sheaf.vertex_offsets[w])
            if sparse:
                ii, jj = np.nonzero(block)
                r_idx.append(ii + r0)
                c_idx.append(jj + c0)
                vals.append(block[ii, jj])
            else:
                delta[r0:r0 + block.shape[0], c0:c0 + block.shape[1]] = block

    if sparse:
        matrix = sp.csr_matrix(
            (np.concatenate(vals) if vals else np.zeros(0),
             (np.concatenate(r_idx) if r_idx else np.zeros(0, int),
              np.concatenate(c_idx) if c_idx else np.zeros(0, int))),
            shape=(rows, cols))
    else:
        delta.setflags(write=False)
        matrix = delta
    return CoboundaryMatrix(
        matrix=matrix,
        vertex_offsets=sheaf.vertex_offsets,
        edge_offsets=sheaf.edge_offsets,
        orientation=sheaf.orientation,
    )


def restriction_blocks_from_coboundary(delta: CoboundaryMatrix) -> Dict[Incidence, np.ndarray]:
    """Recover F_{v<=e} from delta, undoing the recorded orientation signs"""
    blocks = {}
    for e, (u, v) in enumerate(delta.orientation):
        blocks[(u, e)] = -delta.block(e, u)
        blocks[(v, e)] = delta.block(e, v)
    return blocks


def as_cochain0(sheaf: Sheaf, x) -> np.ndarray:
    """Validate a 0-cochain: float64, length c0_dim, finite"""
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.shape[0] != sheaf.c0_dim:
        raise LengthMismatch(f"0-cochain has length {arr.shape[0]}, expected {sheaf.c0_dim}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteEntry("0-cochain has non-finite entries")
    return arr


def apply_coboundary(delta: CoboundaryMatrix, x) -> np.ndarray:
    """(delta x)_e = F_{v<=e} x_v - F_{u<=e} x_u for each oriented edge u -> v"""
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.shape[0] != delta.shape[1]:
        raise LengthMismatch(f"0-cochain has length {arr.shape[0]}, expected {delta.shape[1]}")
    return np.asarray(delta.matrix @ arr).reshape(-1)


def expressed_opinions(sheaf: Sheaf, x) -> Dict[Incidence, np.ndarray]:
    """What each agent says on each incident edge: F_{v<=e} x_v"""
    x = as_cochain0(sheaf, x)
    out = {}
    for e, (u, v) in enumerate(sheaf.graph.edges):
        for w in (u, v):
            out[(w, e)] = sheaf.restrictions[(w, e)] @ x[sheaf.vertex_slice(w)]
    return out


# === Subgraphs ===

@dataclass(frozen=True, eq=False)
class SubSheaf:
    """Restriction of a sheaf to a subgraph, with index maps back to the parent"""
    sheaf: Sheaf
    vertex_map: Tuple[int, ...]  # local vertex -> parent vertex
    edge_map: Tuple[int, ...]  # local edge -> parent edge

    def embed(self, parent: Sheaf, x_local: np.ndarray) -> np.ndarray:
        """Zero-extend a local 0-cochain (or columns of a basis) to the parent"""
        x_local = np.asarray(x_local, dtype=np.float64)
        idx = parent.vertex_indices(self.vertex_map)
        shape = (parent.c0_dim,) + x_local.shape[1:]
        out = np.zeros(shape)
        out[idx] = x_local
        return out


def subgraph_restriction(
    sheaf: Sheaf,
    vertices: Iterable[int],
    edges: Optional[Iterable[int]] = None,
) -> SubSheaf:
    """
    Restrict a sheaf to a vertex subset and an edge subset.

    When edges is None the subgraph is induced (all edges with both endpoints in
    the subset). Explicit edges must have both endpoints in the subset.
    """
    vertex_map = tuple(sorted(set(int(v) for v in vertices)))
    vset = set(vertex_map)
    if edges is None:
        edge_map = tuple(sheaf.graph.induced_edges(vset))
    else:
        edge_map = tuple(sorted(set(int(e) for e in edges)))
        for e in edge_map:
            a, b = sheaf.graph.edges[e]
            if a not in vset or b not in vset:
                raise DanglingEdge(f"edge {e} = ({a}, {b}) has an endpoint outside the vertex subset")

    local = {v: i for i, v in enumerate(vertex_map)}
    graph = Graph(len(vertex_map), tuple((local[sheaf.graph.edges[e][0]], local[sheaf.graph.edges[e][1]])
                                         for e in edge_map))
    restrictions = {}
    for i, e in enumerate(edge_map):
        a, b = sheaf.graph.edges[e]
        restrictions[(local[a], i)] = sheaf.restrictions[(a, e)]
        restrictions[(local[b], i)] = sheaf.restrictions[(b, e)]
    sub = build_sheaf(
        graph,
        [sheaf.vertex_dims[v] for v in vertex_map],
        [sheaf.edge_dims[e] for e in edge_map],
        restrictions,
    )
    return SubSheaf(sheaf=sub, vertex_map=vertex_map, edge_map=edge_map)


# === Reluctance ===

@dataclass(frozen=True, eq=False)
class ReluctanceAugmentation:
    """
    Sheaf on the augmented graph G': original vertices keep their indices,
    parent v' of v is vertex n + v, and edge e' = (v, n + v) follows the
    original edges.
    """
    sheaf: Sheaf
    original_vertices: Tuple[int, ...]
    parent_of: Tuple[int, ...]  # original vertex -> parent vertex
    parent_edge_of: Tuple[int, ...]  # original vertex -> edge to its parent

    def lift(self, x0: np.ndarray) -> np.ndarray:
        """Extend x0 to G' with x0(v') = x0(v)"""
        x0 = np.asarray(x0, dtype=np.float64)
        return np.concatenate([x0, x0])


def augment_reluctance(sheaf: Sheaf, gamma: Sequence[float]) -> ReluctanceAugmentation:
    """Attach a stubborn parent to every vertex with restriction maps sqrt(gamma_v) I"""
    gamma = np.asarray(gamma, dtype=np.float64).reshape(-1)
    n = sheaf.n_vertices
    if gamma.shape[0] != n:
        raise LengthMismatch(f"{gamma.shape[0]} reluctance values for {n} vertices")
    if not np.all(np.isfinite(gamma)) or np.any(gamma < 0):
        raise NegativeGamma("reluctance values must be finite and >= 0")

    m = sheaf.n_edges
    edges = sheaf.graph.edges + tuple((v, n + v) for v in range(n))
    restrictions = dict(sheaf.restrictions)
    for v in range(n):
        block = np.sqrt(gamma[v]) * np.eye(sheaf.vertex_dims[v])
        restrictions[(v, m + v)] = block
        restrictions[(n + v, m + v)] = block
    augmented = build_sheaf(
        Graph(2 * n, edges),
        sheaf.vertex_dims + sheaf.vertex_dims,
        sheaf.edge_dims + sheaf.vertex_dims,
        restrictions,
    )
    return ReluctanceAugmentation(
        sheaf=augmented,
        original_vertices=tuple(range(n)),
        parent_of=tuple(n + v for v in range(n)),
        parent_edge_of=tuple(m + v for v in range(n)),
    )
