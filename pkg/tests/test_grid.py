"""Seed grid construction and neighbor-cell indexing."""

import numpy as np
import pytest

from spixel.errors import ConfigError
from spixel.grid import (
    cell_id_map,
    grid_init,
    neighbor_cells,
    neighbor_index_map,
    pixel_neighbor_map,
)

from oracles import neighbor_cells_oracle


class TestGridInit:
    def test_paper_shape(self):
        g = grid_init(208, 208, 16)
        assert (g.h, g.w) == (13, 13)

    def test_single_cell(self):
        g = grid_init(16, 16, 16)
        assert (g.h, g.w) == (1, 1)

    def test_desk_shape(self):
        g = grid_init(64, 64, 8)
        assert (g.h, g.w) == (8, 8)

    @pytest.mark.parametrize("h,w,s", [(65, 64, 8), (64, 63, 8), (64, 64, 1)])
    def test_invalid_configs(self, h, w, s):
        with pytest.raises(ConfigError):
            grid_init(h, w, s)

    def test_cell_ownership(self):
        g = grid_init(64, 64, 8)
        ids = cell_id_map(g)
        assert ids[0, 0] == 0
        assert ids[7, 7] == 0
        assert ids[8, 0] == 8
        assert ids[63, 63] == 63


class TestNeighborCells:
    def test_interior(self):
        g = grid_init(64, 64, 8)
        # pixel in cell (3, 4)
        cells = neighbor_cells((3 * 8 + 2, 4 * 8 + 5), g)
        expect = [(y, x) for y in (2, 3, 4) for x in (3, 4, 5)]
        assert cells == expect

    def test_corner_clamps(self):
        g = grid_init(64, 64, 8)
        cells = neighbor_cells((0, 0), g)
        assert cells.count((0, 0)) == 4
        assert all(0 <= y < 8 and 0 <= x < 8 for y, x in cells)

    def test_degenerate_grid(self):
        g = grid_init(16, 16, 16)
        assert neighbor_cells((5, 9), g) == [(0, 0)] * 9

    def test_out_of_bounds(self):
        g = grid_init(16, 16, 8)
        with pytest.raises(IndexError):
            neighbor_cells((16, 0), g)

    @pytest.mark.parametrize("seed", range(3))
    def test_index_map_matches_oracle(self, seed):
        rng = np.random.default_rng(seed)
        g = grid_init(24, 32, 8)
        nbr = neighbor_index_map(g)
        for _ in range(50):
            y = int(rng.integers(0, 24))
            x = int(rng.integers(0, 32))
            expect = [cy * g.w + cx for cy, cx in neighbor_cells_oracle(y, x, 8, g.h, g.w)]
            assert nbr[y, x].tolist() == expect

    def test_pixel_neighbor_map_clamps(self):
        pn = pixel_neighbor_map(4, 5)
        # top-left pixel: rows/cols clamp to 0
        assert pn[0, 0, 0] == 0  # (-1,-1) -> (0,0)
        assert pn[0, 0, 4] == 0  # center
        assert pn[0, 0, 8] == 1 * 5 + 1
        # interior pixel maps to the plain 3x3 neighborhood
        expect = [(y, x) for y in (1, 2, 3) for x in (1, 2, 3)]
        assert pn[2, 2].tolist() == [y * 5 + x for y, x in expect]
