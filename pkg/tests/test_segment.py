"""Hard assignment and connectivity enforcement."""

import numpy as np
import pytest

from spixel.autodiff import Tensor
from spixel.grid import grid_init
from spixel.labels import SuperpixelSegmentation
from spixel.segment import (
    default_min_size,
    enforce_connectivity,
    grid_segmentation,
    hard_assign,
)

from oracles import bfs_components_oracle, hard_assign_oracle, softmax_oracle


def _center_one_hot(h, w):
    q = np.zeros((h, w, 9))
    q[:, :, 4] = 1.0
    return q


class TestHardAssign:
    def test_center_one_hot_gives_regular_grid(self):
        grid = grid_init(32, 32, 8)
        seg = hard_assign(Tensor(_center_one_hot(32, 32)), grid)
        assert seg.count == 16
        np.testing.assert_array_equal(seg.ids, grid_segmentation(grid).ids)

    def test_uniform_q_ties_to_channel0(self):
        grid = grid_init(16, 16, 8)
        q = np.full((16, 16, 9), 1.0 / 9.0)
        seg = hard_assign(Tensor(q), grid)
        # channel 0 is the clamped top-left neighbor
        assert seg.ids[0, 0] == 0
        assert seg.ids[12, 12] == 0 * 2 + 0  # cell (1,1) -> top-left (0,0) -> id 0
        assert seg.ids[12, 15] == 0
        assert seg.ids[15, 15] == 0

    @pytest.mark.parametrize("seed", [23, *range(20)])
    def test_matches_argmax_oracle(self, seed):
        rng = np.random.default_rng(seed)
        grid = grid_init(24, 24, 8)
        q = softmax_oracle(rng.standard_normal((24, 24, 9)))
        seg = hard_assign(Tensor(q), grid)
        np.testing.assert_array_equal(seg.ids, hard_assign_oracle(q, 8))

    def test_argmax_invariance_under_monotone_transform(self):
        rng = np.random.default_rng(99)
        grid = grid_init(16, 16, 4)
        q = softmax_oracle(rng.standard_normal((16, 16, 9)))
        base = hard_assign(Tensor(q), grid).ids
        for transform in (np.exp, lambda v: 3 * v + 1, lambda v: v**3):
            np.testing.assert_array_equal(
                hard_assign(Tensor(transform(q)), grid).ids, base
            )


class TestEnforceConnectivity:
    def test_already_connected_is_relabel_only(self):
        ids = np.zeros((8, 8), np.int32)
        ids[:, 4:] = 7  # non-contiguous label values
        seg = SuperpixelSegmentation(ids, 2)
        out = enforce_connectivity(seg, 2)
        assert out.count == 2
        np.testing.assert_array_equal(np.unique(out.ids), [0, 1])
        assert (out.ids[:, :4] == 0).all() and (out.ids[:, 4:] == 1).all()

    def test_orphan_absorbed(self):
        ids = np.zeros((8, 8), np.int32)
        ids[3, 3] = 1
        out = enforce_connectivity(SuperpixelSegmentation(ids, 2), 2)
        assert out.count == 1
        assert (out.ids == 0).all()

    def test_disconnected_same_id_splits(self):
        ids = np.zeros((4, 9), np.int32)
        ids[:, 4] = 1  # a wall splits label 0 into two components
        out = enforce_connectivity(SuperpixelSegmentation(ids, 2), 1)
        assert out.count == 3
        assert out.ids[0, 0] != out.ids[0, 8]

    def test_small_fragment_merges_into_largest_neighbor(self):
        ids = np.zeros((6, 12), np.int32)
        ids[:, 6:] = 1
        ids[2:4, 5:7] = 2  # 4-px fragment straddling the border
        out = enforce_connectivity(SuperpixelSegmentation(ids, 3), 8)
        assert out.count == 2
        # both halves equal-sized after split: tie goes to the lower id (left)
        assert out.ids[2, 5] == out.ids[0, 0]

    @pytest.mark.parametrize("seed", [29, *range(20)])
    def test_bfs_oracle_validates_output(self, seed):
        rng = np.random.default_rng(seed)
        ids = rng.integers(0, 6, (32, 32)).astype(np.int32)
        out = enforce_connectivity(SuperpixelSegmentation(ids, 6), 4)
        comp, ncomp = bfs_components_oracle(out.ids)
        # every output region is 4-connected: region ids and components biject
        assert ncomp == out.count
        pairs = {(a, b) for a, b in zip(out.ids.ravel().tolist(), comp.ravel().tolist())}
        assert len(pairs) == ncomp
        # pixel count conserved
        assert out.ids.size == ids.size

    @pytest.mark.parametrize("seed", range(10))
    def test_idempotent(self, seed):
        rng = np.random.default_rng(seed + 500)
        ids = rng.integers(0, 5, (24, 24)).astype(np.int32)
        once = enforce_connectivity(SuperpixelSegmentation(ids, 5), 4)
        twice = enforce_connectivity(once, 4)
        np.testing.assert_array_equal(once.ids, twice.ids)
        assert once.count == twice.count

    def test_ids_contiguous_row_major(self):
        rng = np.random.default_rng(77)
        ids = rng.integers(0, 4, (16, 16)).astype(np.int32)
        out = enforce_connectivity(SuperpixelSegmentation(ids, 4), 2)
        seen = []
        for v in out.ids.ravel():
            if v not in seen:
                seen.append(v)
        assert seen == list(range(out.count))

    def test_default_min_size(self):
        assert default_min_size(16) == 16
        assert default_min_size(8) == 4
        assert default_min_size(4) == 1
        assert default_min_size(2) == 1
