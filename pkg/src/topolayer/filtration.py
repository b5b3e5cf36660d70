"""Vietoris-Rips filtration over a distance matrix, simplices up to dim 2.

A simplex enters the filtration at the maximum pairwise distance among its
vertices. The total order is (value, dim, lexicographic vertex tuple), which
guarantees faces precede cofaces and makes pairings deterministic.

Simplex ids encode (vertices, dim) in one integer:
    vertex v        -> v*4
    edge (i<j)      -> (i*n + j)*4 + 1
    triangle (i<j<k)-> ((i*n + j)*n + k)*4 + 2
Ids are only meaningful relative to the filtration they came from.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .geometry import DistanceMatrix


@dataclass(frozen=True)
class Simplex:
    vertices: tuple[int, ...]
    dim: int
    value: float
    critical_edge: tuple[int, int] | None = None


def sid_encode(vertices: tuple[int, ...], n: int) -> int:
    k = len(vertices)
    if k == 1:
        return vertices[0] * 4
    if k == 2:
        i, j = vertices
        return (i * n + j) * 4 + 1
    if k == 3:
        i, j, k3 = vertices
        return ((i * n + j) * n + k3) * 4 + 2
    raise ValueError(f"simplices have 1-3 vertices, got {k}")


def sid_decode(sid: int, n: int) -> tuple[int, ...]:
    dim = sid & 3
    code = sid >> 2
    if dim == 0:
        return (code,)
    if dim == 1:
        return (code // n, code % n)
    if dim == 2:
        return (code // (n * n), (code // n) % n, code % n)
    raise ValueError(f"invalid simplex id {sid}")


class Filtration:
    """Immutable sorted Rips filtration.

    Edges are stored as arrays sorted by (value, lexicographic endpoints);
    the full simplex sequence (including all C(n,3) triangles) materializes
    lazily on first access since only diagnostics and the naive reduction
    need it.
    """

    def __init__(self, dm: DistanceMatrix):
        self._dm = dm.entries
        self.n = dm.n
        n = self.n
        if n >= 2:
            iu, ju = np.triu_indices(n, 1)
            vals = self._dm[iu, ju]
            order = np.lexsort((ju, iu, vals))
            self.edges_u = iu[order].astype(np.int64)
            self.edges_v = ju[order].astype(np.int64)
            self.edge_values = vals[order]
            last = self.edge_values[-1]
            # lex-first pair realizing the diameter
            pos = int(np.argmax(self.edge_values == last))
            self.max_value = float(last)
            self.diameter_edge = (int(self.edges_u[pos]), int(self.edges_v[pos]))
        else:
            self.edges_u = np.empty(0, dtype=np.int64)
            self.edges_v = np.empty(0, dtype=np.int64)
            self.edge_values = np.empty(0, dtype=np.float64)
            self.max_value = 0.0
            self.diameter_edge = None
        self._simplices: tuple[Simplex, ...] | None = None

    @property
    def distance_matrix(self) -> np.ndarray:
        return self._dm

    def __len__(self) -> int:
        n = self.n
        return n + n * (n - 1) // 2 + n * (n - 1) * (n - 2) // 6

    def edge_value(self, i: int, j: int) -> float:
        return float(self._dm[i, j])

    def triangle_value_edge(self, i: int, j: int, k: int) -> tuple[float, tuple[int, int]]:
        """Filtration value of triangle (i<j<k) and its lex-first critical edge."""
        pairs = ((i, j), (i, k), (j, k))
        dists = (self._dm[i, j], self._dm[i, k], self._dm[j, k])
        w = int(np.argmax(dists))
        return float(dists[w]), pairs[w]

    def simplex(self, sid: int) -> Simplex:
        verts = sid_decode(int(sid), self.n)
        if len(verts) == 1:
            return Simplex(verts, 0, 0.0, None)
        if len(verts) == 2:
            i, j = verts
            return Simplex(verts, 1, self.edge_value(i, j), (i, j))
        value, crit = self.triangle_value_edge(*verts)
        return Simplex(verts, 2, value, crit)

    @property
    def simplices(self) -> tuple[Simplex, ...]:
        """All simplices sorted by (value, dim, lexicographic vertices)."""
        if self._simplices is None:
            self._simplices = tuple(
                self.simplex(sid) for sid in self.sorted_sids()
            )
        return self._simplices

    def sorted_sids(self) -> np.ndarray:
        """Simplex ids in global filtration order (materializes triangles)."""
        n = self.n
        sid0 = np.arange(n, dtype=np.int64) * 4
        sid1 = (self.edges_u * n + self.edges_v) * 4 + 1
        if n >= 3:
            ti, tj, tk = _triangle_index_arrays(n)
            tv = np.maximum(
                np.maximum(self._dm[ti, tj], self._dm[ti, tk]), self._dm[tj, tk]
            )
            torder = np.lexsort((tk, tj, ti, tv))
            sid2 = ((ti[torder] * n + tj[torder]) * n + tk[torder]) * 4 + 2
            tvals = tv[torder]
        else:
            sid2 = np.empty(0, dtype=np.int64)
            tvals = np.empty(0, dtype=np.float64)
        # each stream is one dim, already (value, lex)-sorted; a stable sort
        # on (value, dim, position-within-stream) yields the global order
        all_sids = np.concatenate((sid0, sid1, sid2))
        all_vals = np.concatenate((np.zeros(n), self.edge_values, tvals))
        all_dims = np.concatenate(
            (np.zeros(n, np.int8), np.ones(len(sid1), np.int8), np.full(len(sid2), 2, np.int8))
        )
        all_pos = np.concatenate(
            (np.arange(n), np.arange(len(sid1)), np.arange(len(sid2)))
        )
        order = np.lexsort((all_pos, all_dims, all_vals))
        return all_sids[order]

    def face_sids(self, sid: int) -> tuple[int, ...]:
        verts = sid_decode(int(sid), self.n)
        if len(verts) == 1:
            return ()
        return tuple(
            sid_encode(f, self.n) for f in combinations(verts, len(verts) - 1)
        )


def _triangle_index_arrays(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized i<j<k index triples."""
    tri = np.array(list(combinations(range(n), 3)), dtype=np.int64)
    if tri.size == 0:
        z = np.empty(0, dtype=np.int64)
        return z, z.copy(), z.copy()
    return tri[:, 0], tri[:, 1], tri[:, 2]


def build_rips(dm: DistanceMatrix) -> Filtration:
    """Build the complete Rips filtration (all vertices, edges, triangles)."""
    return Filtration(dm)


def simplex_count(f: Filtration) -> tuple[int, int, int]:
    """Simplices per dimension: (n, C(n,2), C(n,3))."""
    n = f.n
    return n, n * (n - 1) // 2, n * (n - 1) * (n - 2) // 6
