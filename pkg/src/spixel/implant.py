"""Cell-embedding implantation around each pixel and the fused 3x3 mixing.

For each pixel, the embeddings of its 9 surrounding grid cells are laid out
as a 3x3 window; the window center also carries the pixel's own embedding.
Fusing contracts every window against a learned 3x3 kernel. Training never
materializes the H x W x 3 x 3 x D windows: the window object stays lazy and
the fuse step runs as a gather-accumulate kernel. ``materialize`` exists for
inspection and small-scale checks only.

Variants:
  standard  window = cell embeddings, center += pixel embedding
  pnbor     every tap additionally adds the clamped neighbor pixel embedding
  cpix      center holds the pixel embedding alone (own cell dropped)
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels as K
from .autodiff import Tensor
from .errors import ConfigError, ShapeError
from .grid import GridSpec, neighbor_index_map, pixel_neighbor_map

VARIANTS = {
    "standard": K.VARIANT_STANDARD,
    "pnbor": K.VARIANT_PNBOR,
    "cpix": K.VARIANT_CPIX,
}


def compress_channels(M, w1, b1, w2, b2, slope=0.1):
    """Two chained 3x3 convolutions (activation between) on an [h, w, C] map."""
    m = ad.permute(M, (2, 0, 1))
    m = ad.reshape(m, (1, *m.shape))
    m = compress_channels_nchw(m, w1, b1, w2, b2, slope)
    m = ad.reshape(m, m.shape[1:])
    return ad.permute(m, (1, 2, 0))


def compress_channels_nchw(M, w1, b1, w2, b2, slope=0.1):
    t = ad.leaky_relu(ad.conv2d(M, w1, b1, stride=1, pad=1), slope)
    return ad.conv2d(t, w2, b2, stride=1, pad=1)


@dataclass
class ImplantWindows:
    """Lazy per-pixel 3x3xD windows; realized only on demand."""

    e: Tensor
    mhat: Tensor
    grid: GridSpec
    variant: str

    def materialize(self):
        """[H, W, 3, 3, D] array of the implanted windows (inspection only)."""
        H, W, d = self.e.data.shape
        nbr = neighbor_index_map(self.grid)
        m2 = self.mhat.data.reshape(-1, d)
        win = m2[nbr]  # [H, W, 9, D]
        if self.variant == "pnbor":
            pn = pixel_neighbor_map(H, W)
            win = win + self.e.data.reshape(-1, d)[pn]
        elif self.variant == "cpix":
            win[:, :, 4, :] = self.e.data
        else:
            win[:, :, 4, :] += self.e.data
        return win.reshape(H, W, 3, 3, d)


def implant(E, Mhat, grid, variant="standard"):
    """Build the lazy implanted windows for pixel embedding E and cell map Mhat."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown implant variant {variant!r}; options: {sorted(VARIANTS)}")
    if E.data.ndim != 3 or E.data.shape[:2] != (grid.H, grid.W):
        raise ShapeError(f"pixel embedding {E.data.shape} does not match image "
                         f"{(grid.H, grid.W)}")
    if Mhat.data.ndim != 3 or Mhat.data.shape[:2] != (grid.h, grid.w):
        raise ShapeError(f"cell embedding {Mhat.data.shape} does not match grid "
                         f"{(grid.h, grid.w)}")
    if E.data.shape[2] != Mhat.data.shape[2]:
        raise ShapeError(
            f"pixel and cell embeddings disagree on channels: "
            f"{E.data.shape[2]} vs {Mhat.data.shape[2]}"
        )
    return ImplantWindows(e=E, mhat=Mhat, grid=grid, variant=variant)


def ai_fuse(windows, w, b):
    """Contract each implanted window with a learned [Dout, D, 3, 3] kernel."""
    e, mhat, grid = windows.e, windows.mhat, windows.grid
    H, W, d = e.data.shape
    if w.data.ndim != 4 or w.data.shape[2:] != (3, 3):
        raise ShapeError(f"fuse kernel must be [Dout, D, 3, 3], got {w.data.shape}")
    if w.data.shape[1] != d:
        raise ShapeError(f"fuse kernel channels {w.data.shape[1]} != embedding {d}")
    dout = w.data.shape[0]
    if b.data.shape != (dout,):
        raise ShapeError(f"fuse bias must have shape ({dout},), got {b.data.shape}")
    code = VARIANTS[windows.variant]
    nbr = neighbor_index_map(grid).reshape(-1, 9)
    pnbr = pixel_neighbor_map(H, W).reshape(-1, 9)
    e2 = e.data.reshape(-1, d)
    m2 = mhat.data.reshape(-1, d)
    out2 = K.implant_fuse_fwd(e2, m2, w.data, b.data, nbr, pnbr, code)
    out = Tensor(out2.reshape(H, W, dout))

    def bw(g):
        de2, dm2, dw, db = K.implant_fuse_bwd(
            g.reshape(-1, dout), e2, m2, w.data, nbr, pnbr, code
        )
        return (
            de2.reshape(H, W, d),
            dm2.reshape(grid.h, grid.w, d),
            dw,
            db,
        )

    return ad.record_op(out, (e, mhat, w, b), bw)
