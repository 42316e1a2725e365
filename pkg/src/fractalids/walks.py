"""Nearest-neighbour random walks on window grids."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse


@dataclass(frozen=True, eq=False)
class WalkKernel:
    """Transition matrix ``P`` on a vertex set with a reversible weight ``w``.

    Rows of a truncated kernel may be substochastic (mass leaving the
    vertex set); ``row_deficit`` reports it.
    """

    P: sparse.csr_matrix
    w: np.ndarray
    M: int
    m: int

    @property
    def n(self):
        return self.P.shape[0]

    @property
    def row_deficit(self):
        return 1.0 - np.asarray(self.P.sum(axis=1)).ravel()

    def reversibility_error(self):
        F = sparse.diags(self.w) @ self.P
        return float(abs(F - F.T).max()) if F.nnz else 0.0

    def stochasticity_error(self):
        return float(np.abs(self.row_deficit).max())


def infinite_degrees(graph):
    """Vertex degrees in the m-grid of the unbounded fractal.

    Inside the window the graph degree is exact; at the window corners the
    neighbouring copies of K<M> contribute (rank - 1) further copies of the
    corner star.
    """
    deg = graph.degrees.astype(float)
    ranks = graph.system.corner_ranks
    for j, v in enumerate(graph.corners):
        deg[v] *= ranks[j]
    return deg


def ambient_walk_kernel(system, M, m):
    """Simple random walk of the unbounded fractal, truncated to K<M>.

    Rows at the window corners (other than the origin) lose the mass that
    would jump into neighbouring copies.
    """
    g = system.build_graph(M, m)
    deg = infinite_degrees(g)
    P = sparse.diags(1.0 / deg) @ g.vertex_adjacency
    return WalkKernel(P.tocsr(), deg, M, m)
