# -*- coding: utf-8 -*-
"""
Shared fixtures: exact rational rank oracle and random sheaf generators.
"""

from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np
import pytest

from src.sheaf import Graph, Sheaf, build_sheaf, constant_sheaf

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

# Laplacian of the 4-vertex cyclic example sheaf, entrywise
FOUR_AGENT_LAPLACIAN = np.array([
    [5, -2, 4, 0, -1, 0],
    [-2, 2, -1, -1, 0, 0],
    [4, -1, 5, -1, 0, 0],
    [0, -1, -1, 2, 1, -1],
    [-1, 0, 0, 1, 2, -1],
    [0, 0, 0, -1, -1, 2],
], dtype=np.float64)


def exact_rank(matrix) -> int:
    """Rank by Gaussian elimination over the rationals (float entries taken exactly)"""
    rows = [[Fraction(float(v)) for v in row] for row in np.asarray(matrix)]
    if not rows or not rows[0]:
        return 0
    n_rows, n_cols = len(rows), len(rows[0])
    rank = 0
    for col in range(n_cols):
        pivot = next((r for r in range(rank, n_rows) if rows[r][col] != 0), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for r in range(n_rows):
            if r != rank and rows[r][col] != 0:
                factor = rows[r][col] / rows[rank][col]
                rows[r] = [a - factor * b for a, b in zip(rows[r], rows[rank])]
        rank += 1
        if rank == n_rows:
            break
    return rank


def numeric_gradient(f, x, h=1e-6):
    """Central differences of a scalar function"""
    grad = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (f(x + e) - f(x - e)) / (2 * h)
    return grad


def random_graph(rng: np.random.Generator, n_vertices: int, p_edge: float = 0.5) -> Graph:
    edges = tuple((u, v) for u in range(n_vertices) for v in range(u + 1, n_vertices)
                  if rng.random() < p_edge)
    return Graph(n_vertices, edges)


def random_sheaf(rng: np.random.Generator, max_vertices: int = 8, max_dim: int = 3,
                 integer: bool = False, p_edge: float = 0.5, graph: Optional[Graph] = None) -> Sheaf:
    """
    Random sheaf with stalk dimensions 1..max_dim. Integer mode draws entries
    from {-2, ..., 2}, which makes rank drops (nontrivial sections) common.
    """
    if graph is None:
        graph = random_graph(rng, int(rng.integers(1, max_vertices + 1)), p_edge)
    vertex_dims = [int(rng.integers(1, max_dim + 1)) for _ in range(graph.n_vertices)]
    edge_dims = [int(rng.integers(1, max_dim + 1)) for _ in range(graph.n_edges)]
    restrictions = {}
    for e, (u, v) in enumerate(graph.edges):
        for w in (u, v):
            shape = (edge_dims[e], vertex_dims[w])
            if integer:
                restrictions[(w, e)] = rng.integers(-2, 3, size=shape).astype(np.float64)
            else:
                restrictions[(w, e)] = rng.standard_normal(shape)
    return build_sheaf(graph, vertex_dims, edge_dims, restrictions)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def edge_sheaf() -> Sheaf:
    """Constant R-sheaf on a single edge"""
    return constant_sheaf(Graph(2, ((0, 1),)))


@pytest.fixture
def path3() -> Sheaf:
    """Constant R-sheaf on the path a - b - c"""
    return constant_sheaf(Graph.path(3))


@pytest.fixture
def logs():
    """Collecting on_log sink"""
    return []
