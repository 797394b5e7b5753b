"""Label maps, superpixel segmentations, and boundary extraction."""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass
class LabelMap:
    """H x W integer class ids with their class count."""

    ids: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.ids = np.asarray(self.ids)
        if self.ids.ndim != 2:
            raise ShapeError(f"label map must be 2-d, got shape {self.ids.shape}")

    def validate(self):
        if self.ids.min() < 0 or self.ids.max() >= self.num_classes:
            raise ShapeError(
                f"label ids must lie in [0, {self.num_classes}), "
                f"got range [{self.ids.min()}, {self.ids.max()}]"
            )

    @property
    def shape(self):
        return self.ids.shape


@dataclass
class SuperpixelSegmentation:
    """H x W superpixel ids plus the number of distinct superpixels."""

    ids: np.ndarray
    count: int

    @property
    def shape(self):
        return self.ids.shape


def one_hot(labels, dtype=np.float64):
    """[H, W, num_classes] one-hot encoding of a LabelMap."""
    ids = labels.ids
    out = np.zeros((*ids.shape, labels.num_classes), dtype)
    h_idx, w_idx = np.indices(ids.shape)
    out[h_idx, w_idx, ids] = 1
    return out


def four_neighbor_boundary(ids):
    """Boolean mask of pixels that have a 4-neighbor with a different id."""
    ids = np.asarray(ids)
    mask = np.zeros(ids.shape, bool)
    diff_v = ids[:-1, :] != ids[1:, :]
    mask[:-1, :] |= diff_v
    mask[1:, :] |= diff_v
    diff_h = ids[:, :-1] != ids[:, 1:]
    mask[:, :-1] |= diff_h
    mask[:, 1:] |= diff_h
    return mask
