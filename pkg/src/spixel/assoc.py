"""Soft pixel-to-cell association: property aggregation, reconstruction, and
the label + position training loss built on them.

The association map holds, per pixel, a probability over its 9 surrounding
cells. Aggregation forms each cell's property as the association-weighted
mean over every pixel that lists it; reconstruction projects cell properties
back to pixels through the same weights. Both are differentiable through the
association map and the property tensor.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels as K
from .autodiff import Tensor
from .errors import ConfigError, ShapeError
from .grid import neighbor_index_map
from .labels import one_hot

# Keeps the weighted mean defined when a border-clamped cell collects almost
# no probability mass. Every cell receives at least its own pixels' mass, so
# the guard perturbs constants by < 9e-16 relative.
DEN_GUARD = 1e-16

# Reconstructed probabilities can reach exactly 0 for classes absent from a
# neighborhood; floor them before the log.
CE_FLOOR = 1e-12


@dataclass
class AssociationMap:
    """[H, W, 9] per-pixel probabilities over the surrounding cells."""

    q: Tensor

    def __post_init__(self):
        if not isinstance(self.q, Tensor):
            self.q = Tensor(self.q)
        if self.q.data.ndim != 3 or self.q.data.shape[-1] != 9:
            raise ShapeError(f"association map must be [H, W, 9], got {self.q.shape}")

    @property
    def shape(self):
        return self.q.shape

    def validate(self, atol=1e-6):
        data = self.q.data
        if data.min() < -atol:
            raise ShapeError("association map has negative entries")
        sums = data.sum(axis=-1)
        if np.abs(sums - 1.0).max() > atol:
            raise ShapeError("association map channels do not sum to 1")


def _q_tensor(Q):
    return Q.q if isinstance(Q, AssociationMap) else Q


def _check_grid_q(q, grid):
    if q.data.shape[:2] != (grid.H, grid.W):
        raise ShapeError(
            f"association map {q.data.shape[:2]} does not match grid image "
            f"{(grid.H, grid.W)}"
        )


def aggregate_superpixel_property(Q, L, grid):
    """Association-weighted mean of the pixel property per cell: [h, w, C]."""
    q = _q_tensor(Q)
    _check_grid_q(q, grid)
    if L.data.shape[:2] != (grid.H, grid.W):
        raise ShapeError(f"property map {L.data.shape} does not match {grid.H}x{grid.W}")
    c = L.data.shape[2]
    nbr = neighbor_index_map(grid).reshape(-1, 9)
    q2 = q.data.reshape(-1, 9)
    l2 = L.data.reshape(-1, c)
    num, den = K.aggregate_fwd(q2, l2, nbr, grid.ncells)
    den_g = den + den.dtype.type(DEN_GUARD)
    hs = num / den_g[:, None]
    out = Tensor(hs.reshape(grid.h, grid.w, c))

    def bw(g):
        g2 = g.reshape(-1, c)
        dnum = g2 / den_g[:, None]
        dden = -(g2 * hs).sum(axis=1) / den_g
        dq2, dl2 = K.aggregate_bwd(dnum, dden, q2, l2, nbr)
        return (dq2.reshape(grid.H, grid.W, 9), dl2.reshape(grid.H, grid.W, c))

    return ad.record_op(out, (q, L), bw)


def reconstruct_pixel_property(Q, Hs, grid):
    """Project cell properties back to pixels through the association: [H, W, C]."""
    q = _q_tensor(Q)
    _check_grid_q(q, grid)
    if Hs.data.shape[:2] != (grid.h, grid.w):
        raise ShapeError(f"cell property map {Hs.data.shape} does not match grid "
                         f"{(grid.h, grid.w)}")
    c = Hs.data.shape[2]
    nbr = neighbor_index_map(grid).reshape(-1, 9)
    q2 = q.data.reshape(-1, 9)
    hs2 = Hs.data.reshape(-1, c)
    out = Tensor(K.reconstruct_fwd(q2, hs2, nbr).reshape(grid.H, grid.W, c))

    def bw(g):
        dq2, dhs2 = K.reconstruct_bwd(g.reshape(-1, c), q2, hs2, nbr, grid.ncells)
        return (dq2.reshape(grid.H, grid.W, 9), dhs2.reshape(grid.h, grid.w, c))

    return ad.record_op(out, (q, Hs), bw)


def position_map(grid, dtype=np.float64):
    """[H, W, 2] pixel (row, col) coordinates divided by the interval S."""
    ys = np.arange(grid.H, dtype=dtype) / grid.S
    xs = np.arange(grid.W, dtype=dtype) / grid.S
    out = np.empty((grid.H, grid.W, 2), dtype)
    out[:, :, 0] = ys[:, None]
    out[:, :, 1] = xs[None, :]
    return out


def task_loss_parts(Q, labels, grid):
    """(cross-entropy, position) reconstruction losses, both pixel means.

    One-hot labels and S-normalized coordinates ride through aggregation and
    reconstruction together; the label part scores -log of the reconstructed
    probability of the true class, the position part the squared coordinate
    error summed over (row, col).
    """
    q = _q_tensor(Q)
    labels.validate()
    if labels.ids.shape != (grid.H, grid.W):
        raise ShapeError(f"labels {labels.ids.shape} do not match {grid.H}x{grid.W}")
    dtype = q.data.dtype
    k = labels.num_classes
    oh = one_hot(labels, dtype)
    pos = position_map(grid, dtype)
    prop = Tensor(np.concatenate([oh, pos], axis=-1))
    cell = aggregate_superpixel_property(q, prop, grid)
    rec = reconstruct_pixel_property(q, cell, grid)

    rec_labels = ad.narrow(rec, 2, 0, k)
    p_true = ad.tsum(ad.mul(rec_labels, Tensor(oh)), axis=2)
    ce = ad.neg(ad.tmean(ad.tlog(ad.clamp(p_true, lo=CE_FLOOR))))

    rec_pos = ad.narrow(rec, 2, k, k + 2)
    diff = ad.sub(rec_pos, Tensor(pos))
    pos_err = ad.mul(ad.tsum(ad.mul(diff, diff)), 1.0 / (grid.H * grid.W))
    return ce, pos_err


def task_loss(Q, labels, grid, position_weight):
    """Cross-entropy plus weighted position reconstruction error (scalar)."""
    if position_weight < 0:
        raise ConfigError(f"position weight must be >= 0, got {position_weight}")
    ce, pos_err = task_loss_parts(Q, labels, grid)
    return ad.add(ce, ad.mul(pos_err, position_weight))
