"""Regular seed grid over an image and 3x3 neighbor-cell indexing.

Pixel (y, x) belongs to cell (y // S, x // S). Each pixel sees the 3x3 block
of cells centered on its own cell, listed row-major (top-left ... bottom-
right); blocks that stick out of the grid are replicate-clamped to the
border, so border pixels list some cells more than once.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError

# row-major 3x3 offsets, center at index 4
NEIGHBOR_OFFSETS = tuple(
    (dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)
)


@dataclass(frozen=True)
class GridSpec:
    """Sampling interval S and the derived h x w cell grid for an H x W image."""

    S: int
    H: int
    W: int
    h: int
    w: int

    @property
    def ncells(self):
        return self.h * self.w


def grid_init(H, W, S):
    if S < 2:
        raise ConfigError(f"sampling interval must be >= 2, got {S}")
    if H % S or W % S:
        raise ConfigError(
            f"image size {H}x{W} is not divisible by the sampling interval {S}"
        )
    return GridSpec(S=S, H=H, W=W, h=H // S, w=W // S)


def cell_of(p, grid):
    y, x = p
    if not (0 <= y < grid.H and 0 <= x < grid.W):
        raise IndexError(f"pixel {p} outside {grid.H}x{grid.W} image")
    return (y // grid.S, x // grid.S)


def neighbor_cells(p, grid):
    """The 9 (row, col) cells surrounding pixel p, row-major, clamped."""
    cy, cx = cell_of(p, grid)
    out = []
    for dy, dx in NEIGHBOR_OFFSETS:
        yy = min(max(cy + dy, 0), grid.h - 1)
        xx = min(max(cx + dx, 0), grid.w - 1)
        out.append((yy, xx))
    return out


@lru_cache(maxsize=32)
def _neighbor_index_map(S, H, W):
    h, w = H // S, W // S
    cy = np.arange(H) // S
    cx = np.arange(W) // S
    nbr = np.empty((H, W, 9), np.int32)
    for k, (dy, dx) in enumerate(NEIGHBOR_OFFSETS):
        yy = np.clip(cy + dy, 0, h - 1)
        xx = np.clip(cx + dx, 0, w - 1)
        nbr[:, :, k] = yy[:, None] * w + xx[None, :]
    return nbr


def neighbor_index_map(grid):
    """[H, W, 9] int32 map of flattened neighbor-cell ids (read-only cache)."""
    return _neighbor_index_map(grid.S, grid.H, grid.W)


@lru_cache(maxsize=32)
def _pixel_neighbor_map(H, W):
    ys = np.arange(H)
    xs = np.arange(W)
    pn = np.empty((H, W, 9), np.int32)
    for k, (dy, dx) in enumerate(NEIGHBOR_OFFSETS):
        yy = np.clip(ys + dy, 0, H - 1)
        xx = np.clip(xs + dx, 0, W - 1)
        pn[:, :, k] = yy[:, None] * W + xx[None, :]
    return pn


def pixel_neighbor_map(H, W):
    """[H, W, 9] int32 map of replicate-clamped neighbor pixel ids."""
    return _pixel_neighbor_map(H, W)


def cell_id_map(grid):
    """[H, W] int32 map assigning each pixel its own cell id."""
    cy = np.arange(grid.H) // grid.S
    cx = np.arange(grid.W) // grid.S
    return (cy[:, None] * grid.w + cx[None, :]).astype(np.int32)
