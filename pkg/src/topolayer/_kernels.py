"""Numba kernels for the persistence reduction.

Integer sort keys keep comparisons exact: an edge's key is
(value_rank << SHIFT) | (i*n + j), a triangle's is
(value_rank << SHIFT) | ((i*n + j)*n + k) over the sorted vertex triple,
where value_rank indexes the sorted unique pairwise distances. Ordering keys
numerically therefore orders simplices by (value, lexicographic vertices),
matching the filtration's tie-break rule within each dimension.

SHIFT = 29 bounds the vertex count at 800 (800^3 < 2^29), which the public
wrapper enforces.
"""
from __future__ import annotations

import numpy as np
from numba import njit

SHIFT = 29
MAX_POINTS = 800
_CODE_MASK = (1 << SHIFT) - 1
_INF = np.int64(0x7FFFFFFFFFFFFFFF)
_EMPTY = np.int64(-1)


@njit(cache=True, inline="always")
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


@njit(cache=True)
def h0_kernel(n, eu, ev):
    """Kruskal over (value, lex)-sorted edges with the elder rule.

    Merging two components kills the one whose minimum vertex index is
    larger. Returns (death edge index per finite bar, dying component's
    minimum vertex per finite bar, tree mask over the sorted edges).
    """
    parent = np.arange(n)
    oldest = np.arange(n)
    n_bars = n - 1 if n > 1 else 0
    dedge = np.empty(n_bars, dtype=np.int64)
    dvert = np.empty(n_bars, dtype=np.int64)
    tree = np.zeros(len(eu), dtype=np.bool_)
    k = 0
    for e in range(len(eu)):
        ru = _find(parent, eu[e])
        rv = _find(parent, ev[e])
        if ru == rv:
            continue
        tree[e] = True
        ou, ov = oldest[ru], oldest[rv]
        if ou < ov:
            keep, young = ou, ov
        else:
            keep, young = ov, ou
        parent[ru] = rv
        oldest[rv] = keep
        dedge[k] = e
        dvert[k] = young
        k += 1
        if k == n_bars:
            break
    return dedge[:k], dvert[:k], tree


@njit(cache=True, inline="always")
def _tri_code(u, v, w, n):
    if w < u:
        a, b, c = w, u, v
    elif w < v:
        a, b, c = u, w, v
    else:
        a, b, c = u, v, w
    return (a * n + b) * n + c


@njit(cache=True, inline="always")
def _tri_key(ruv, ruw, rvw, u, v, w, n):
    r = ruv
    if ruw > r:
        r = ruw
    if rvw > r:
        r = rvw
    return (np.int64(r) << SHIFT) | _tri_code(u, v, w, n)


@njit(cache=True, inline="always")
def _max_facet(tkey, rank, n):
    """(u, v, edge key) of the (rank, lex)-largest facet of triangle tkey."""
    code = tkey & _CODE_MASK
    c = code % n
    b = (code // n) % n
    a = code // (n * n)
    kab = (np.int64(rank[a, b]) << SHIFT) | (a * n + b)
    kac = (np.int64(rank[a, c]) << SHIFT) | (a * n + c)
    kbc = (np.int64(rank[b, c]) << SHIFT) | (b * n + c)
    if kab >= kac and kab >= kbc:
        return a, b, kab
    if kac >= kbc:
        return a, c, kac
    return b, c, kbc


@njit(cache=True, inline="always")
def _min_cofacet(u, v, rank, n):
    """Min cofacet key of edge (u, v).

    Triangle codes grow with the third vertex, and a triangle's rank can
    never drop below its facet's, so the first w whose two side ranks do
    not exceed rank[u, v] is the minimum; otherwise track the best key.
    """
    ruv = rank[u, v]
    best = _INF
    for w in range(n):
        if w == u or w == v:
            continue
        ruw = rank[u, w]
        rvw = rank[v, w]
        if ruw <= ruv and rvw <= ruv:
            return (np.int64(ruv) << SHIFT) | _tri_code(u, v, w, n)
        r = ruw if ruw > rvw else rvw
        k = (np.int64(r) << SHIFT) | _tri_code(u, v, w, n)
        if k < best:
            best = k
    return best


@njit(cache=True, inline="always")
def _heap_push(heap, size, key):
    heap[size] = key
    i = size
    size += 1
    while i > 0:
        p = (i - 1) >> 1
        if heap[p] <= heap[i]:
            break
        heap[p], heap[i] = heap[i], heap[p]
        i = p
    return size


@njit(cache=True, inline="always")
def _heap_pop(heap, size):
    top = heap[0]
    size -= 1
    heap[0] = heap[size]
    i = 0
    while True:
        left = 2 * i + 1
        right = left + 1
        s = i
        if left < size and heap[left] < heap[s]:
            s = left
        if right < size and heap[right] < heap[s]:
            s = right
        if s == i:
            break
        heap[i], heap[s] = heap[s], heap[i]
        i = s
    return top, size


@njit(cache=True, inline="always")
def _hash_slot(keys, key):
    mask = len(keys) - 1
    h = (key * np.int64(0x9E3779B97F4A7C15)) & _INF
    i = h & mask
    while keys[i] != _EMPTY and keys[i] != key:
        i = (i + 1) & mask
    return i


@njit(cache=True)
def _hash_grow(keys, vals):
    nk = np.full(len(keys) * 2, _EMPTY, dtype=np.int64)
    nv = np.empty(len(vals) * 2, dtype=np.int64)
    for i in range(len(keys)):
        if keys[i] != _EMPTY:
            j = _hash_slot(nk, keys[i])
            nk[j] = keys[i]
            nv[j] = vals[i]
    return nk, nv


@njit(cache=True)
def h1_kernel(n, rank, eu, ev, tree):
    """Dim-1 persistence pairs via coboundary column reduction.

    Non-tree edges are processed in descending (value, lex) order (tree
    edges are cleared: union-find already paired them). Most columns
    terminate immediately as apparent pairs (the edge is the max facet of
    its min cofacet); the rest run a heap-based reduction where mod-2
    cancellation happens on pop, previously claimed columns are replayed
    from their stored V-columns, and apparent columns encountered as pivots
    are regenerated on the fly instead of being stored.

    Returns (birth edge index into the sorted edge arrays, death triangle
    key) per finite pair. A complete Rips 2-skeleton admits no essential
    dim-1 class, so every non-tree edge is paired; -1 death keys would mark
    the impossible essential case and are asserted away by the wrapper.
    """
    ne = len(eu)
    n_cols = 0
    for e in range(ne):
        if not tree[e]:
            n_cols += 1
    out_e = np.empty(n_cols, dtype=np.int64)
    out_t = np.empty(n_cols, dtype=np.int64)
    n_out = 0

    hkeys = np.full(1024, _EMPTY, dtype=np.int64)
    hvals = np.empty(1024, dtype=np.int64)
    n_claimed = 0

    vbuf = np.empty(1024, dtype=np.int64)
    voff = np.empty(n_cols + 1, dtype=np.int64)
    voff[0] = 0
    n_stored = 0

    heap = np.empty(4096, dtype=np.int64)
    vcur = np.empty(256, dtype=np.int64)

    for e in range(ne - 1, -1, -1):
        if tree[e]:
            continue
        u, v = eu[e], ev[e]
        ruv = rank[u, v]
        # fused min-cofacet scan + apparent-pair test
        t = _EMPTY
        best = _INF
        strictly_max = False
        for w in range(n):
            if w == u or w == v:
                continue
            ruw = rank[u, w]
            rvw = rank[v, w]
            if ruw <= ruv and rvw <= ruv:
                t = (np.int64(ruv) << SHIFT) | _tri_code(u, v, w, n)
                strictly_max = ruw < ruv and rvw < ruv
                break
            r = ruw if ruw > rvw else rvw
            k = (np.int64(r) << SHIFT) | _tri_code(u, v, w, n)
            if k < best:
                best = k
        if t == _EMPTY:
            t = best
        if not strictly_max:
            fu, fv, fkey = _max_facet(t, rank, n)
            strictly_max = fkey == ((np.int64(ruv) << SHIFT) | (u * n + v))
        if strictly_max:
            out_e[n_out] = e
            out_t[n_out] = t
            n_out += 1
            continue

        # full reduction of this column
        hsize = 0
        for w in range(n):
            if w == u or w == v:
                continue
            k = _tri_key(ruv, rank[u, w], rank[v, w], u, v, w, n)
            if hsize == len(heap):
                heap = _grow(heap, hsize)
            hsize = _heap_push(heap, hsize, k)
        nv = 0
        vcur[0] = u * n + v
        nv = 1
        while True:
            pivot = _EMPTY
            while hsize > 0:
                k, hsize = _heap_pop(heap, hsize)
                if hsize > 0 and heap[0] == k:
                    _, hsize = _heap_pop(heap, hsize)
                    continue
                pivot = k
                break
            if pivot == _EMPTY:
                out_e[n_out] = e
                out_t[n_out] = _EMPTY
                n_out += 1
                break
            slot = _hash_slot(hkeys, pivot)
            if hkeys[slot] == pivot:
                # replay the claimed column's V-form
                c = hvals[slot]
                hsize = _heap_push(heap, hsize, pivot)
                for idx in range(voff[c], voff[c + 1]):
                    code2 = vbuf[idx]
                    u2 = code2 // n
                    v2 = code2 % n
                    if nv == len(vcur):
                        vcur = _grow(vcur, nv)
                    vcur[nv] = code2
                    nv += 1
                    r2 = rank[u2, v2]
                    for w in range(n):
                        if w == u2 or w == v2:
                            continue
                        k = _tri_key(r2, rank[u2, w], rank[v2, w], u2, v2, w, n)
                        if hsize == len(heap):
                            heap = _grow(heap, hsize)
                        hsize = _heap_push(heap, hsize, k)
                continue
            fu, fv, fkey = _max_facet(pivot, rank, n)
            if _min_cofacet(fu, fv, rank, n) == pivot:
                # apparent column: regenerate instead of storing
                if nv == len(vcur):
                    vcur = _grow(vcur, nv)
                vcur[nv] = fu * n + fv
                nv += 1
                hsize = _heap_push(heap, hsize, pivot)
                rf = rank[fu, fv]
                for w in range(n):
                    if w == fu or w == fv:
                        continue
                    k = _tri_key(rf, rank[fu, w], rank[fv, w], fu, fv, w, n)
                    if hsize == len(heap):
                        heap = _grow(heap, hsize)
                    hsize = _heap_push(heap, hsize, k)
                continue
            # new pivot owner: claim it and store the V-column
            if 2 * (n_claimed + 1) > len(hkeys):
                hkeys, hvals = _hash_grow(hkeys, hvals)
                slot = _hash_slot(hkeys, pivot)
            hkeys[slot] = pivot
            hvals[slot] = n_stored
            n_claimed += 1
            need = voff[n_stored] + nv
            while need > len(vbuf):
                vbuf = _grow(vbuf, voff[n_stored])
            vbuf[voff[n_stored]: need] = vcur[:nv]
            voff[n_stored + 1] = need
            n_stored += 1
            out_e[n_out] = e
            out_t[n_out] = pivot
            n_out += 1
            break
    return out_e[:n_out], out_t[:n_out]


@njit(cache=True)
def _grow(arr, used):
    out = np.empty(len(arr) * 2, dtype=np.int64)
    out[:used] = arr[:used]
    return out
