"""Boundary-perceiving loss on pixel embeddings.

Samples KxK patches that straddle exactly two semantic regions, splits each
label's pixels into two random groups, and scores group-mean similarities:
same-label means are pulled together, cross-label means pushed apart.
Similarity is 2 / (1 + exp(L1 distance)), clamped away from {0, 1} before
the logs.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError, UsageError
from .labels import LabelMap, four_neighbor_boundary

SIM_CLAMP = 1e-6

# L1 distances beyond this leave sim pinned at the clamp floor anyway
# (sim(40) ~ 8.5e-18 << the 1e-6 clamp); capping before exp keeps float32
# forward/backward free of overflow, since exp(L1)^2 must stay finite.
L1_CAP = 40.0


@dataclass
class BoundaryPatch:
    """A KxK window containing exactly two labels, each with >= 2 pixels."""

    origin: tuple
    K: int
    label_a: int
    label_b: int
    members_a: np.ndarray  # [m, 2] (row, col), row-major order
    members_b: np.ndarray  # [n, 2]


@dataclass
class GroupPartition:
    """Random even split of each label's members into two groups."""

    f1: np.ndarray
    f2: np.ndarray
    g1: np.ndarray
    g2: np.ndarray


def boundary_mask(labels):
    """True where a pixel has a 4-neighbor with a different semantic label."""
    return four_neighbor_boundary(labels.ids)


def sample_patches(labels, K, max_patches, rng):
    """Draw boundary-centered KxK windows, uniformly without replacement.

    A candidate window is kept only if it lies fully inside the image,
    contains exactly two labels, and each label covers at least 2 pixels.
    """
    if K < 1 or K % 2 == 0:
        raise ConfigError(f"patch size must be odd and positive, got {K}")
    if max_patches < 1:
        raise ConfigError(f"max_patches must be >= 1, got {max_patches}")
    ids = labels.ids
    h, w = ids.shape
    centers = np.argwhere(boundary_mask(labels))
    if len(centers) == 0:
        return []
    half = K // 2
    patches = []
    for i in rng.permutation(len(centers)):
        y, x = int(centers[i][0]), int(centers[i][1])
        if y < half or x < half or y + half >= h or x + half >= w:
            continue
        window = ids[y - half : y + half + 1, x - half : x + half + 1]
        present, counts = np.unique(window, return_counts=True)
        if len(present) != 2 or counts.min() < 2:
            continue
        label_a, label_b = int(present[0]), int(present[1])
        wy, wx = np.nonzero(window == label_a)
        members_a = np.stack([wy + y - half, wx + x - half], axis=1)
        wy, wx = np.nonzero(window == label_b)
        members_b = np.stack([wy + y - half, wx + x - half], axis=1)
        patches.append(
            BoundaryPatch(
                origin=(y - half, x - half),
                K=K,
                label_a=label_a,
                label_b=label_b,
                members_a=members_a,
                members_b=members_b,
            )
        )
        if len(patches) == max_patches:
            break
    return patches


def make_partition(patch, rng):
    """Random even split (sizes differ by <= 1); label-a draw precedes label-b."""
    pa = rng.permutation(len(patch.members_a))
    pb = rng.permutation(len(patch.members_b))
    ha = (len(pa) + 1) // 2
    hb = (len(pb) + 1) // 2
    return GroupPartition(
        f1=patch.members_a[pa[:ha]],
        f2=patch.members_a[pa[ha:]],
        g1=patch.members_b[pb[:hb]],
        g2=patch.members_b[pb[hb:]],
    )


def group_mean(features):
    """Arithmetic mean of a non-empty stack of D-vectors."""
    if isinstance(features, (list, tuple)):
        if len(features) == 0:
            raise UsageError("group_mean needs at least one vector")
        features = ad.stack0([f if isinstance(f, Tensor) else Tensor(f) for f in features])
    if features.data.shape[0] == 0:
        raise UsageError("group_mean needs at least one vector")
    return ad.tmean(features, axis=0)


def sim(f, g):
    """Similarity 2 / (1 + exp(L1(f - g))) in (0, 1]; 1 iff f == g."""
    if not isinstance(f, Tensor):
        f = Tensor(f)
    if not isinstance(g, Tensor):
        g = Tensor(g)
    if f.data.shape != g.data.shape:
        raise ShapeError(f"sim: shapes {f.data.shape} and {g.data.shape} differ")
    l1 = ad.clamp(ad.tsum(ad.tabs(ad.sub(f, g))), hi=L1_CAP)
    return 2.0 / (ad.texp(l1) + 1.0)


def _clamped_sim(a, b):
    return ad.clamp(sim(a, b), SIM_CLAMP, 1.0 - SIM_CLAMP)


def patch_loss(patch, partition, E):
    """Similarity-classification loss for one patch, differentiable through E."""
    means = {}
    for name, coords in (
        ("f1", partition.f1),
        ("f2", partition.f2),
        ("g1", partition.g1),
        ("g2", partition.g2),
    ):
        if len(coords) == 0:
            raise UsageError(f"partition group {name} is empty")
        means[name] = group_mean(ad.take_pixels(E, coords[:, 0], coords[:, 1]))
    within = ad.add(
        ad.tlog(_clamped_sim(means["f1"], means["f2"])),
        ad.tlog(_clamped_sim(means["g1"], means["g2"])),
    )
    cross = ad.add(
        ad.tlog(1.0 - _clamped_sim(means["f1"], means["g1"])),
        ad.tlog(1.0 - _clamped_sim(means["f2"], means["g2"])),
    )
    return ad.add(ad.mul(within, -0.5), ad.mul(cross, -0.5))


def boundary_loss_from_patches(E, patches, partitions):
    """Mean patch loss over a fixed patch sample; 0 for an empty sample."""
    if len(patches) == 0:
        return Tensor(np.asarray(0.0, E.data.dtype))
    total = None
    for patch, part in zip(patches, partitions):
        term = patch_loss(patch, part, E)
        total = term if total is None else ad.add(total, term)
    return ad.mul(total, 1.0 / len(patches))


def boundary_loss(E, labels, K, max_patches, rng):
    """Sample patches and partitions with ``rng``, then average their losses."""
    patches = sample_patches(labels, K, max_patches, rng)
    partitions = [make_partition(p, rng) for p in patches]
    return boundary_loss_from_patches(E, patches, partitions)
