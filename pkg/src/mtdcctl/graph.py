"""Undirected weighted graphs and their Laplacian algebra.

Nodes are 0-based internally. Edges are stored low index first, which fixes
the orientation of the incidence matrix: column ``k`` of the incidence
matrix has ``+1`` at the lower endpoint and ``-1`` at the upper one.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .exceptions import DimensionError, ValidationError

PROPORTIONALITY_RTOL = 1e-9


@dataclass(frozen=True)
class Topology:
    """Static undirected weighted graph on ``n`` nodes.

    ``edges`` holds ``(i, j, weight)`` triples. Endpoints given high index
    first are reordered on construction.
    """

    n: int
    edges: tuple

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError(f"node count must be a positive integer, got {self.n!r}", "n")
        norm = []
        seen = set()
        for k, edge in enumerate(self.edges):
            i, j, w = edge
            i, j, w = int(i), int(j), float(w)
            if i == j:
                raise ValidationError(f"self-loop at node {i}", f"edges[{k}]")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValidationError(f"endpoint out of range for n={self.n}", f"edges[{k}]")
            if not w > 0 or not np.isfinite(w):
                raise ValidationError(f"weight must be positive and finite, got {w!r}", f"edges[{k}]")
            i, j = min(i, j), max(i, j)
            if (i, j) in seen:
                raise ValidationError(f"duplicate edge ({i}, {j})", f"edges[{k}]")
            seen.add((i, j))
            norm.append((i, j, w))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "edges", tuple(norm))
        if not self.is_connected():
            raise ValidationError(f"graph on {self.n} nodes is not connected", "edges")

    @property
    def m(self):
        return len(self.edges)

    @property
    def weights(self):
        return np.array([w for _, _, w in self.edges], dtype=float)

    def neighbors(self, i):
        """``(j, weight)`` pairs adjacent to node ``i``."""
        out = []
        for a, b, w in self.edges:
            if a == i:
                out.append((b, w))
            elif b == i:
                out.append((a, w))
        return out

    def is_connected(self):
        if self.n == 1:
            return True
        rows = [i for i, _, _ in self.edges]
        cols = [j for _, j, _ in self.edges]
        adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n))
        ncomp, _ = connected_components(adj, directed=False)
        return ncomp == 1

    def scaled(self, factor):
        return Topology(self.n, tuple((i, j, factor * w) for i, j, w in self.edges))

    @cached_property
    def laplacian(self):
        return weighted_laplacian(self)


def incidence_matrix(t):
    """Vertex-edge incidence matrix, shape ``(n, m)``."""
    b = np.zeros((t.n, t.m))
    for k, (i, j, _) in enumerate(t.edges):
        b[i, k] = 1.0
        b[j, k] = -1.0
    return b


def weighted_laplacian(t):
    """Dense weighted Laplacian ``B W B^T`` assembled entry by entry."""
    lap = np.zeros((t.n, t.n))
    for i, j, w in t.edges:
        lap[i, i] += w
        lap[j, j] += w
        lap[i, j] -= w
        lap[j, i] -= w
    return lap


def orthonormal_complement(n):
    """Orthonormal basis ``S`` (n x n-1) of the complement of ``1_n``.

    Built from the Householder reflector that maps ``e_1`` onto
    ``1_n / sqrt(n)``; columns 2..n of the reflector are returned.
    """
    if int(n) != n or n < 2:
        raise DimensionError(f"orthonormal complement needs n >= 2, got {n!r}", "n")
    n = int(n)
    v = -np.full(n, 1.0 / np.sqrt(n))
    v[0] += 1.0
    h = np.eye(n) - 2.0 * np.outer(v, v) / (v @ v)
    return h[:, 1:].copy()


def proportionality_factor(la, lb, rtol=PROPORTIONALITY_RTOL):
    """Return ``k > 0`` with ``la == k * lb`` (to ``rtol``), else ``None``."""
    la = np.asarray(la, dtype=float)
    lb = np.asarray(lb, dtype=float)
    if la.shape != lb.shape:
        raise DimensionError(f"shape mismatch {la.shape} vs {lb.shape}")
    denom = np.sum(lb * lb)
    if denom == 0.0:
        return None
    k = float(np.sum(la * lb) / denom)
    if not k > 0:
        return None
    if np.max(np.abs(la - k * lb)) <= rtol * np.max(np.abs(la)):
        return k
    return None


def algebraic_connectivity(lap):
    return float(np.linalg.eigvalsh(lap)[1])
