"""Persistent homology over F2 for Rips filtrations, dims 0 and 1.

``compute_persistence`` is the production path: union-find for dim 0 and a
coboundary column reduction with clearing and apparent-pair shortcuts for
dim 1. The pairing of a fixed simplexwise filtration is canonical, so the
result must match the textbook boundary-matrix reduction exactly;
``reduce_naive`` implements that reduction without optimizations as a test
oracle, and ``compute_h0_unionfind`` is a second, independently coded dim-0
oracle. All three must agree bar-for-bar, attribution included.

Barcodes hold numpy arrays; ``Bar`` objects materialize lazily because a
complete Rips complex on a few hundred points carries thousands of
zero-length dim-1 bars that the losses filter out anyway.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .filtration import Filtration, sid_encode
from .geometry import DistanceMatrix

_NO_EDGE = (-1, -1)


@dataclass(frozen=True)
class Bar:
    dim: int
    birth: float
    death: float
    birth_simplex: int
    death_simplex: int | None
    essential: bool


@dataclass(frozen=True)
class Barcode:
    """Struct-of-arrays barcode; one row per bar.

    ``death_sids`` is -1 for essential bars. ``birth_edges``/``death_edges``
    hold the critical-edge endpoints that realize each value ((-1, -1) when
    the value is not edge-realized: vertex births, and the essential death
    of a single-point cloud).
    """

    dims: np.ndarray
    births: np.ndarray
    deaths: np.ndarray
    birth_sids: np.ndarray
    death_sids: np.ndarray
    birth_edges: np.ndarray
    death_edges: np.ndarray
    max_value: float
    n_points: int

    def __len__(self) -> int:
        return len(self.dims)

    @cached_property
    def bars(self) -> tuple[Bar, ...]:
        out = []
        for i in range(len(self.dims)):
            essential = self.death_sids[i] < 0
            out.append(
                Bar(
                    int(self.dims[i]),
                    float(self.births[i]),
                    float(self.deaths[i]),
                    int(self.birth_sids[i]),
                    None if essential else int(self.death_sids[i]),
                    bool(essential),
                )
            )
        return tuple(out)

    def select(self, dim: int) -> np.ndarray:
        return np.flatnonzero(self.dims == dim)


def _empty_barcode(max_value: float = 0.0, n_points: int = 0) -> Barcode:
    z = np.empty(0)
    zi = np.empty(0, dtype=np.int64)
    ze = np.empty((0, 2), dtype=np.int64)
    return Barcode(
        np.empty(0, dtype=np.int8), z, z.copy(), zi, zi.copy(), ze, ze.copy(),
        max_value, n_points,
    )


def _assemble(
    dims: np.ndarray,
    births: np.ndarray,
    deaths: np.ndarray,
    birth_sids: np.ndarray,
    death_sids: np.ndarray,
    birth_edges: np.ndarray,
    death_edges: np.ndarray,
    max_value: float,
    n_points: int,
) -> Barcode:
    """Sort rows canonically by (dim, birth, death, birth sid)."""
    order = np.lexsort((birth_sids, deaths, births, dims))
    return Barcode(
        dims[order],
        births[order],
        deaths[order],
        birth_sids[order],
        death_sids[order],
        birth_edges[order],
        death_edges[order],
        float(max_value),
        n_points,
    )


def _rank_matrix(f: Filtration) -> np.ndarray:
    """Dense n x n matrix of distance ranks among sorted unique values."""
    n = f.n
    rank = np.zeros((n, n), dtype=np.int64)
    if len(f.edge_values):
        newv = np.empty(len(f.edge_values), dtype=bool)
        newv[0] = True
        np.not_equal(f.edge_values[1:], f.edge_values[:-1], out=newv[1:])
        ranks_sorted = np.cumsum(newv) - 1
        rank[f.edges_u, f.edges_v] = ranks_sorted
        rank[f.edges_v, f.edges_u] = ranks_sorted
    return rank


def compute_persistence(f: Filtration) -> Barcode:
    """Persistence pairing of the filtration; fast production path."""
    n = f.n
    if n == 0:
        return _empty_barcode()
    if n > _kernels.MAX_POINTS:
        raise ValueError(
            f"persistence reduction supports up to {_kernels.MAX_POINTS} points, got {n}"
        )
    if n == 1:
        return Barcode(
            np.zeros(1, dtype=np.int8),
            np.zeros(1),
            np.zeros(1),
            np.zeros(1, dtype=np.int64),
            np.full(1, -1, dtype=np.int64),
            np.full((1, 2), -1, dtype=np.int64),
            np.full((1, 2), -1, dtype=np.int64),
            0.0,
            1,
        )
    eu, ev = f.edges_u, f.edges_v
    dedge, dvert, tree = _kernels.h0_kernel(n, eu, ev)
    rank = _rank_matrix(f)
    h1_e, h1_t = _kernels.h1_kernel(n, rank, eu, ev, tree)
    if np.any(h1_t < 0):
        raise AssertionError("essential dim-1 class in a complete Rips complex")

    n0 = len(dedge)
    n1 = len(h1_e)
    dims = np.concatenate(
        (np.zeros(n0 + 1, dtype=np.int8), np.ones(n1, dtype=np.int8))
    )
    births = np.concatenate((np.zeros(n0 + 1), f.edge_values[h1_e]))
    # dim-0 deaths: merge edge values; essential death: the diameter
    deaths0 = f.edge_values[dedge]
    # dim-1 deaths: decode triangle keys, take max pairwise distance
    code = h1_t & _kernels._CODE_MASK
    tc = code % n
    tb = (code // n) % n
    ta = code // (n * n)
    dm = f.distance_matrix
    d3 = np.stack((dm[ta, tb], dm[ta, tc], dm[tb, tc]))
    which = np.argmax(d3, axis=0)
    deaths1 = d3[which, np.arange(n1)]
    deaths = np.concatenate((deaths0, [f.max_value], deaths1))

    birth_sids = np.concatenate(
        (dvert * 4, [0], (eu[h1_e] * n + ev[h1_e]) * 4 + 1)
    ).astype(np.int64)
    death_sids = np.concatenate(
        (
            (eu[dedge] * n + ev[dedge]) * 4 + 1,
            [-1],
            ((ta * n + tb) * n + tc) * 4 + 2,
        )
    ).astype(np.int64)

    birth_edges = np.full((n0 + 1 + n1, 2), -1, dtype=np.int64)
    if n1:
        birth_edges[n0 + 1:, 0] = eu[h1_e]
        birth_edges[n0 + 1:, 1] = ev[h1_e]
    death_edges = np.empty((n0 + 1 + n1, 2), dtype=np.int64)
    death_edges[:n0, 0] = eu[dedge]
    death_edges[:n0, 1] = ev[dedge]
    death_edges[n0] = f.diameter_edge if f.diameter_edge is not None else _NO_EDGE
    if n1:
        # lex-first pair realizing the triangle's value
        pair_u = np.stack((ta, ta, tb))
        pair_v = np.stack((tb, tc, tc))
        death_edges[n0 + 1:, 0] = pair_u[which, np.arange(n1)]
        death_edges[n0 + 1:, 1] = pair_v[which, np.arange(n1)]

    return _assemble(
        dims, births, deaths, birth_sids, death_sids, birth_edges, death_edges,
        f.max_value, n,
    )


def compute_h0_unionfind(dm: DistanceMatrix) -> Barcode:
    """Independent dim-0 oracle: union-find over ascending edges.

    Coded without the numba kernels on purpose; agreement between this,
    ``compute_persistence``, and ``reduce_naive`` is an acceptance gate.
    """
    n = dm.n
    m = dm.entries
    if n == 0:
        return _empty_barcode()
    edges = sorted(
        (float(m[i, j]), i, j) for i in range(n) for j in range(i + 1, n)
    )
    max_value = edges[-1][0] if edges else 0.0
    parent = list(range(n))
    oldest = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    rows: list[tuple[float, int, int, int, int, int]] = []
    for value, i, j in edges:
        ri, rj = find(i), find(j)
        if ri == rj:
            continue
        keep = min(oldest[ri], oldest[rj])
        young = max(oldest[ri], oldest[rj])
        parent[ri] = rj
        oldest[rj] = keep
        rows.append((value, young, (i * n + j) * 4 + 1, i, j, 0))
        if len(rows) == n - 1:
            break

    k = len(rows) + 1
    dims = np.zeros(k, dtype=np.int8)
    births = np.zeros(k)
    deaths = np.array([r[0] for r in rows] + [max_value])
    birth_sids = np.array([r[1] * 4 for r in rows] + [0], dtype=np.int64)
    death_sids = np.array([r[2] for r in rows] + [-1], dtype=np.int64)
    birth_edges = np.full((k, 2), -1, dtype=np.int64)
    death_edges = np.full((k, 2), -1, dtype=np.int64)
    for idx, r in enumerate(rows):
        death_edges[idx] = (r[3], r[4])
    if edges:
        # edges are sorted by (value, i, j): the first max-value entry is
        # the lex-first diameter pair
        for value, i, j in edges:
            if value == max_value:
                death_edges[-1] = (i, j)
                break
    return _assemble(
        dims, births, deaths, birth_sids, death_sids, birth_edges, death_edges,
        max_value, n,
    )


def reduce_naive(f: Filtration) -> Barcode:
    """Textbook boundary-matrix column reduction over the global order.

    Columns are Python-int bitmasks over row positions; no twist, no
    clearing, no shortcuts. Dim-2 creators (would-be dim-2 classes) are
    ignored; homology is reported for dims 0 and 1 only.
    """
    n = f.n
    if n == 0:
        return _empty_barcode()
    sids = f.sorted_sids()
    pos = {int(s): i for i, s in enumerate(sids)}
    m = len(sids)
    cols: list[int] = []
    for s in sids:
        mask = 0
        for face in f.face_sids(int(s)):
            mask |= 1 << pos[face]
        cols.append(mask)
    owner: dict[int, int] = {}
    pair_of: dict[int, int] = {}
    for j in range(m):
        c = cols[j]
        while c:
            low = c.bit_length() - 1
            if low in owner:
                c ^= cols[owner[low]]
            else:
                owner[low] = j
                cols[j] = c
                pair_of[low] = j
                break
        else:
            cols[j] = 0

    paired_rows = set(pair_of)
    paired_cols = set(pair_of.values())
    rows_out = []
    for i in range(m):
        simplex = None
        if i in paired_rows:
            s = f.simplex(int(sids[i]))
            if s.dim > 1:
                continue
            t = f.simplex(int(sids[pair_of[i]]))
            rows_out.append((s, t))
        elif i not in paired_cols:
            s = f.simplex(int(sids[i]))
            if s.dim > 1:
                continue
            rows_out.append((s, None))

    k = len(rows_out)
    dims = np.empty(k, dtype=np.int8)
    births = np.empty(k)
    deaths = np.empty(k)
    birth_sids = np.empty(k, dtype=np.int64)
    death_sids = np.empty(k, dtype=np.int64)
    birth_edges = np.full((k, 2), -1, dtype=np.int64)
    death_edges = np.full((k, 2), -1, dtype=np.int64)
    for idx, (s, t) in enumerate(rows_out):
        dims[idx] = s.dim
        births[idx] = s.value
        birth_sids[idx] = sid_encode(s.vertices, n)
        if s.critical_edge is not None:
            birth_edges[idx] = s.critical_edge
        if t is None:
            deaths[idx] = f.max_value
            death_sids[idx] = -1
            if f.diameter_edge is not None:
                death_edges[idx] = f.diameter_edge
        else:
            deaths[idx] = t.value
            death_sids[idx] = sid_encode(t.vertices, n)
            death_edges[idx] = t.critical_edge
    return _assemble(
        dims, births, deaths, birth_sids, death_sids, birth_edges, death_edges,
        f.max_value, n,
    )


def warmup() -> None:
    """Compile the numba kernels on a tiny input (cached on disk)."""
    from .filtration import build_rips
    from .geometry import PointCloud, pairwise_distances

    cloud = PointCloud(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
    compute_persistence(build_rips(pairwise_distances(cloud)))
