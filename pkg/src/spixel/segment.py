"""Decoding an association map into a superpixel segmentation.

Hard assignment takes the per-pixel argmax over the 9 neighbor channels
(ties to the lowest channel index). Connectivity enforcement then makes
every superpixel a 4-connected component: fragments smaller than
``min_size`` are absorbed into their largest 4-adjacent neighbor and ids are
relabeled contiguously in row-major first-appearance order.
"""

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError
from .grid import cell_id_map, neighbor_index_map
from .labels import SuperpixelSegmentation


def hard_assign(Q, grid):
    from .assoc import AssociationMap  # local import avoids a module cycle

    q = Q.q.data if isinstance(Q, AssociationMap) else getattr(Q, "data", np.asarray(Q))
    nbr = neighbor_index_map(grid)
    best = q.argmax(axis=2)  # argmax returns the first (lowest) index on ties
    ids = np.take_along_axis(nbr, best[..., None], axis=2)[..., 0].astype(np.int32)
    return SuperpixelSegmentation(ids=ids, count=int(np.unique(ids).size))


def grid_segmentation(grid):
    """The trivial segmentation assigning every pixel its own grid cell."""
    ids = cell_id_map(grid)
    return SuperpixelSegmentation(ids=ids, count=grid.ncells)


def default_min_size(S):
    return max(1, (S * S) // 16)


def _first_appearance_relabel(comp):
    flat = comp.ravel()
    uniq, first = np.unique(flat, return_index=True)
    order = uniq[np.argsort(first)]
    remap = np.empty(int(flat.max()) + 1, np.int32)
    remap[order] = np.arange(len(uniq), dtype=np.int32)
    return remap[comp], len(uniq)


def _connected_labels(ids):
    """4-connected components of equal-id pixels, labeled row-major."""
    h, w = ids.shape
    n = h * w
    pix = np.arange(n).reshape(h, w)
    rows = []
    cols = []
    same_v = ids[:-1, :] == ids[1:, :]
    rows.append(pix[:-1, :][same_v])
    cols.append(pix[1:, :][same_v])
    same_h = ids[:, :-1] == ids[:, 1:]
    rows.append(pix[:, :-1][same_h])
    cols.append(pix[:, 1:][same_h])
    row = np.concatenate(rows)
    col = np.concatenate(cols)
    graph = sparse.coo_matrix(
        (np.ones(len(row), np.int8), (row, col)), shape=(n, n)
    )
    _, comp = connected_components(graph, directed=False)
    comp, ncomp = _first_appearance_relabel(comp.reshape(h, w))
    return comp, ncomp


def _component_adjacency(comp, ncomp):
    adj = [set() for _ in range(ncomp)]
    for a, b in (
        (comp[:-1, :].ravel(), comp[1:, :].ravel()),
        (comp[:, :-1].ravel(), comp[:, 1:].ravel()),
    ):
        diff = a != b
        for x, y in zip(a[diff].tolist(), b[diff].tolist()):
            adj[x].add(y)
            adj[y].add(x)
    return adj


def enforce_connectivity(seg, min_size=None):
    """Return a segmentation whose every region is 4-connected and, where
    possible, at least ``min_size`` pixels (undersized fragments merge into
    their largest 4-adjacent neighbor; ties pick the lowest id)."""
    if min_size is None:
        min_size = 1
    if min_size < 1:
        raise ConfigError(f"min_size must be >= 1, got {min_size}")
    comp, ncomp = _connected_labels(np.asarray(seg.ids))
    sizes = np.bincount(comp.ravel(), minlength=ncomp).astype(np.int64)
    adj = _component_adjacency(comp, ncomp)

    parent = list(range(ncomp))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    # smallest components first so growing merges can rescue later ones
    order = sorted(range(ncomp), key=lambda c: (sizes[c], c))
    for c in order:
        root = find(c)
        if root != c or sizes[root] >= min_size:
            continue
        neighbor_roots = {find(nc) for nc in adj[c]} - {root}
        if not neighbor_roots:
            continue  # an isolated undersized region has nowhere to go
        target = max(neighbor_roots, key=lambda r: (sizes[r], -r))
        parent[root] = target
        sizes[target] += sizes[root]
        adj[target] |= adj[root]

    roots = np.fromiter((find(c) for c in range(ncomp)), np.int32, ncomp)
    merged = roots[comp]
    ids, count = _first_appearance_relabel(merged)
    return SuperpixelSegmentation(ids=ids, count=count)
