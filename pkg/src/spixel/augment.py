"""Patch-jitter augmentation: aligned patch swaps and cyclic strip shifts.

Both operations move image and label content through the identical pixel
permutation. Each may additionally fire the random-patch trick: one affected
patch is overwritten with uniform [0, 1) noise and its labels get a fresh
class id. Draw order from the supplied generator is part of the contract
(tests replay it):

patch_shuffle: cell pair -> replace? -> victim -> noise
random_shift:  L -> offset -> strip anchor (aligned axis, then free axis)
               -> side -> [replace? -> noise, only when offset > 0]
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .labels import LabelMap


@dataclass
class AugmentConfig:
    S: int
    p_replace: float = 0.25
    shuffle: bool = True
    shift: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.S < 2:
            raise ConfigError(f"patch granularity must be >= 2, got {self.S}")
        if not 0.0 <= self.p_replace <= 1.0:
            raise ConfigError(f"p_replace must be in [0, 1], got {self.p_replace}")


def _check_dims(img, labels, S):
    h, w = labels.ids.shape
    if img.shape[:2] != (h, w):
        raise ConfigError(f"image {img.shape[:2]} and labels {(h, w)} disagree")
    if h % S or w % S:
        raise ConfigError(f"image size {h}x{w} is not divisible by S={S}")
    return h, w


def patch_shuffle(img, labels, cfg, rng):
    """Swap two distinct aligned SxS patches; maybe replace one with noise."""
    h, w = _check_dims(img, labels, cfg.S)
    s = cfg.S
    gh, gw = h // s, w // s
    img2 = img.copy()
    ids2 = labels.ids.copy()
    num_classes = labels.num_classes
    if gh * gw < 2:
        return img2, LabelMap(ids2, num_classes)
    a, b = rng.choice(gh * gw, size=2, replace=False)
    ra, ca = divmod(int(a), gw)
    rb, cb = divmod(int(b), gw)
    sl_a = (slice(ra * s, ra * s + s), slice(ca * s, ca * s + s))
    sl_b = (slice(rb * s, rb * s + s), slice(cb * s, cb * s + s))
    img2[sl_a], img2[sl_b] = img[sl_b], img[sl_a]
    ids2[sl_a], ids2[sl_b] = labels.ids[sl_b], labels.ids[sl_a]
    if rng.random() < cfg.p_replace:
        victim = sl_a if rng.integers(2) == 0 else sl_b
        img2[victim] = rng.random((s, s) + img.shape[2:])
        ids2[victim] = num_classes
        num_classes += 1
    return img2, LabelMap(ids2, num_classes)


def random_shift(img, labels, cfg, direction, rng):
    """Cyclically translate an SxL (or LxS) strip; maybe replace the wrap."""
    if direction not in ("horizontal", "vertical"):
        raise ConfigError(f"direction must be horizontal or vertical, got {direction!r}")
    h, w = _check_dims(img, labels, cfg.S)
    s = cfg.S
    img2 = img.copy()
    ids2 = labels.ids.copy()
    num_classes = labels.num_classes

    if direction == "horizontal":
        length = int(rng.integers(s, w)) if w > s else s
        offset = int(rng.integers(0, s))
        r0 = int(rng.integers(0, h // s)) * s
        c0 = int(rng.integers(0, w - length + 1))
        region = (slice(r0, r0 + s), slice(c0, c0 + length))
        axis = 1
    else:
        length = int(rng.integers(s, h)) if h > s else s
        offset = int(rng.integers(0, s))
        c0 = int(rng.integers(0, w // s)) * s
        r0 = int(rng.integers(0, h - length + 1))
        region = (slice(r0, r0 + length), slice(c0, c0 + s))
        axis = 0

    toward_start = rng.integers(2) == 0  # left for horizontal, up for vertical
    shift = -offset if toward_start else offset
    img2[region] = np.roll(img[region], shift, axis=axis)
    ids2[region] = np.roll(labels.ids[region], shift, axis=axis)

    if offset > 0 and rng.random() < cfg.p_replace:
        # the wrapped-around segment of the strip
        wrap = slice(length - offset, length) if toward_start else slice(0, offset)
        if axis == 1:
            seg = (region[0], slice(c0 + wrap.start, c0 + wrap.stop))
            noise_shape = (s, offset) + img.shape[2:]
        else:
            seg = (slice(r0 + wrap.start, r0 + wrap.stop), region[1])
            noise_shape = (offset, s) + img.shape[2:]
        img2[seg] = rng.random(noise_shape)
        ids2[seg] = num_classes
        num_classes += 1
    return img2, LabelMap(ids2, num_classes)
