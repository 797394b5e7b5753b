"""Segmentation quality metrics and threshold-based proposal merging.

ASA: each region adopts its dominant ground-truth class; the score is the
covered pixel fraction (normalized by total pixel count, so it lives in
[0, 1]). BR / BP: fraction of ground-truth (resp. predicted) boundary pixels
within a Chebyshev ``tol`` of the other boundary set, boundaries per the
4-neighbor rule. Proposal merging greedily unions the most similar adjacent
region pair (mean-feature similarity 2 / (1 + exp(L1))) until no pair beats
the threshold, recomputing means after every union.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import ConfigError, ShapeError
from .labels import LabelMap, SuperpixelSegmentation, four_neighbor_boundary

BOUNDARY_TOL = 2  # default Chebyshev tolerance at desk resolutions


@dataclass
class MetricReport:
    n_superpixels: int
    asa: float
    br: float
    bp: float
    runtime_ms: float


@dataclass
class ProposalSet:
    """Merged regions, the threshold that produced them, and their count."""

    ids: np.ndarray
    threshold: float
    n_regions: int

    @property
    def shape(self):
        return self.ids.shape


def _ids_of(seg):
    if isinstance(seg, (SuperpixelSegmentation, ProposalSet)):
        return np.asarray(seg.ids)
    if isinstance(seg, LabelMap):
        return np.asarray(seg.ids)
    return np.asarray(seg)


def asa(seg, gt):
    """Achievable segmentation accuracy in [0, 1]; 1 iff every region is pure."""
    ids = _ids_of(seg)
    gt_ids = np.asarray(gt.ids)
    if ids.shape != gt_ids.shape:
        raise ShapeError(f"segmentation {ids.shape} and labels {gt_ids.shape} differ")
    nseg = int(ids.max()) + 1
    ngt = max(int(gt_ids.max()) + 1, gt.num_classes)
    table = np.bincount(
        ids.ravel().astype(np.int64) * ngt + gt_ids.ravel().astype(np.int64),
        minlength=nseg * ngt,
    ).reshape(nseg, ngt)
    return float(table.max(axis=1).sum() / ids.size)


def _dilate_chebyshev(mask, tol):
    if tol == 0:
        return mask
    h, w = mask.shape
    out = np.zeros_like(mask)
    for dy in range(-tol, tol + 1):
        ys = slice(max(dy, 0), h + min(dy, 0))
        yd = slice(max(-dy, 0), h + min(-dy, 0))
        for dx in range(-tol, tol + 1):
            xs = slice(max(dx, 0), w + min(dx, 0))
            xd = slice(max(-dx, 0), w + min(-dx, 0))
            out[yd, xd] |= mask[ys, xs]
    return out


def boundary_metrics(seg, gt, tol=BOUNDARY_TOL):
    """(boundary recall, boundary precision) at Chebyshev tolerance ``tol``.

    Fractions over empty boundary sets are vacuously 1.
    """
    if tol < 0:
        raise ConfigError(f"tolerance must be >= 0, got {tol}")
    seg_b = four_neighbor_boundary(_ids_of(seg))
    gt_b = four_neighbor_boundary(np.asarray(gt.ids))
    if gt_b.shape != seg_b.shape:
        raise ShapeError("segmentation and labels differ in size")
    if gt_b.any():
        br = float((gt_b & _dilate_chebyshev(seg_b, tol)).sum() / gt_b.sum())
    else:
        br = 1.0
    if seg_b.any():
        bp = float((seg_b & _dilate_chebyshev(gt_b, tol)).sum() / seg_b.sum())
    else:
        bp = 1.0
    return br, bp


def _pair_similarity(a, b):
    return 2.0 / (1.0 + np.exp(np.abs(a - b).sum()))


def _region_stats(ids, feats, n):
    c = feats.shape[-1]
    flat_ids = ids.ravel()
    counts = np.bincount(flat_ids, minlength=n).astype(np.float64)
    sums = np.empty((n, c), np.float64)
    flat_feats = feats.reshape(-1, c)
    for ch in range(c):
        sums[:, ch] = np.bincount(flat_ids, weights=flat_feats[:, ch], minlength=n)
    return sums, counts


def _first_appearance_relabel(ids):
    flat = ids.ravel()
    uniq, first = np.unique(flat, return_index=True)
    order = uniq[np.argsort(first)]
    remap = np.empty(int(flat.max()) + 1, np.int32)
    remap[order] = np.arange(len(uniq), dtype=np.int32)
    return remap[ids], len(uniq)


def merge_proposals(seg, features, threshold):
    """Union adjacent regions while their mean-feature similarity beats the
    threshold, most similar pair first (ties to the lower id pair)."""
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"threshold must be in [0, 1], got {threshold}")
    feats = features.data if isinstance(features, Tensor) else np.asarray(features)
    ids = _ids_of(seg)
    if feats.shape[:2] != ids.shape:
        raise ShapeError(f"features {feats.shape[:2]} and segmentation {ids.shape} differ")
    ids, n = _first_appearance_relabel(ids.astype(np.int64))
    sums, counts = _region_stats(ids, feats, n)

    edges = set()
    for a, b in (
        (ids[:-1, :].ravel(), ids[1:, :].ravel()),
        (ids[:, :-1].ravel(), ids[:, 1:].ravel()),
    ):
        diff = a != b
        lo = np.minimum(a[diff], b[diff])
        hi = np.maximum(a[diff], b[diff])
        edges.update(zip(lo.tolist(), hi.tolist()))

    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def mean(r):
        return sums[r] / counts[r]

    while edges:
        best = None
        best_sim = -1.0
        for a, b in sorted(edges):  # sorted scan makes ties pick the lowest pair
            s = _pair_similarity(mean(a), mean(b))
            if s > best_sim:
                best = (a, b)
                best_sim = s
        if best is None or best_sim <= threshold:
            break
        a, b = best
        keep, gone = (a, b) if a < b else (b, a)
        parent[gone] = keep
        sums[keep] += sums[gone]
        counts[keep] += counts[gone]
        new_edges = set()
        for u, v in edges:
            ru, rv = find(u), find(v)
            if ru == rv:
                continue
            new_edges.add((ru, rv) if ru < rv else (rv, ru))
        edges = new_edges

    roots = np.fromiter((find(i) for i in range(n)), np.int64, n)
    merged, count = _first_appearance_relabel(roots[ids])
    return ProposalSet(ids=merged, threshold=float(threshold), n_regions=count)


CSV_HEADER = ["n_superpixels", "asa", "br", "bp", "runtime_ms"]


def format_metrics_csv(reports):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in reports:
        writer.writerow(
            [r.n_superpixels, f"{r.asa:.6f}", f"{r.br:.6f}", f"{r.bp:.6f}", f"{r.runtime_ms:.3f}"]
        )
    return buf.getvalue()


def write_metrics_csv(reports, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_metrics_csv(reports))
