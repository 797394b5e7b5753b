"""Encoder-decoder with a cell-embedding branch and 9-way association head.

Encoder: log2(S) stages of (conv3x3, act, conv3x3, act, 2x2 max-pool); the
bottleneck is the cell embedding M with one feature vector per grid cell.
Decoder: log2(S) stages of (2x transposed conv, skip concat, conv3x3, act);
the skip from the matching encoder stage is concatenated at every stage
except the last, keeping low-level pixel detail out of the prediction path.
The decoder output E is the pixel embedding. M is channel-compressed to
match E, implanted around each pixel, fused with a learned 3x3 kernel, and
two head convolutions plus a channel softmax produce the association map Q.

With ``use_ai=False`` the implantation step is replaced by a plain 3x3
convolution on E with the same kernel shape (the ablation baseline).
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError
from .grid import grid_init
from .implant import VARIANTS, ai_fuse, compress_channels_nchw, implant

SLOPE = 0.1  # leaky-rectifier slope used everywhere

# Confidence ceiling on the association logits: per item, the logits are
# centered across the 9 channels (invisible to the softmax) and, when their
# RMS exceeds the ceiling, rescaled back onto it. Below the ceiling the map
# is the identity. Without normalization layers anywhere in the net,
# confidence otherwise grows by plain activation amplification, and at small
# training budgets that saturates the 9-way softmax (gradients ~ e^-gap)
# long before the spatial features needed for boundary-adherent assignments
# can form. The ceiling removes the payoff for amplification without
# touching the argmax or the below-ceiling regime.
LOGIT_CEILING = 0.75
_NORM_EPS = 1e-8


@dataclass(frozen=True)
class ModelConfig:
    S: int = 8
    widths: tuple = (16, 32, 64)
    D: int = 8
    compress_mid: int = 16
    K: int = 5
    variant: str = "standard"
    use_ai: bool = True
    precision: str = "f32"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        levels = int(self.S).bit_length() - 1
        if self.S < 2 or (1 << levels) != self.S:
            raise ConfigError(f"sampling interval must be a power of two >= 2, got {self.S}")
        if len(self.widths) != levels:
            raise ConfigError(
                f"need log2(S)={levels} encoder widths for S={self.S}, "
                f"got {len(self.widths)}"
            )
        if min(self.widths) < 1 or self.D < 1 or self.compress_mid < 1:
            raise ConfigError("channel widths must be positive")
        if self.K < 1 or self.K % 2 == 0:
            raise ConfigError(f"patch size K must be odd and positive, got {self.K}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"precision must be 'f32' or 'f64', got {self.precision}")

    @property
    def levels(self):
        return len(self.widths)

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64


PAPER_CONFIG = ModelConfig(S=16, widths=(32, 64, 128, 256), D=16, compress_mid=64, K=5)
DESK_CONFIG = ModelConfig(S=8, widths=(16, 32, 64), D=8, compress_mid=16, K=5)


def _cap_logits(logits):
    """Center [N, 9, H, W] logits per pixel and cap their RMS per item."""
    items = []
    for i in range(logits.data.shape[0]):
        li = ad.center_channels(ad.take_item(logits, i))
        flat = ad.reshape(li, (li.data.size,))
        rms = ad.tsqrt(ad.add(ad.tmean(ad.mul(flat, flat)), _NORM_EPS))
        over = ad.clamp(ad.mul(rms, 1.0 / LOGIT_CEILING), lo=1.0)
        items.append(ad.scale_by(li, 1.0 / over))
    return ad.stack0(items)


def _conv_shapes(config):
    """(name, shape, fan_in) for every parameter, in creation order."""
    shapes = []

    def conv(name, cout, cin, k=3):
        shapes.append((f"{name}_w", (cout, cin, k, k), cin * k * k))
        shapes.append((f"{name}_b", (cout,), cin * k * k))

    cin = 3
    for i, width in enumerate(config.widths, start=1):
        conv(f"enc{i}_conv1", width, cin)
        conv(f"enc{i}_conv2", width, width)
        cin = width

    n = config.levels
    prev = config.widths[-1]
    for j in range(n):
        target = config.widths[n - 2 - j] if j < n - 1 else config.D
        shapes.append((f"dec{j + 1}_deconv_w", (prev, target, 2, 2), prev * 4))
        conv_in = target + (config.widths[n - 1 - j] if j < n - 1 else 0)
        conv(f"dec{j + 1}_conv", target, conv_in)
        prev = target

    if config.use_ai:
        conv("comp_conv1", config.compress_mid, config.widths[-1])
        conv("comp_conv2", config.D, config.compress_mid)
    conv("ai", config.D, config.D)
    conv("head_conv1", config.D, config.D)
    conv("head_conv2", 9, config.D)
    return shapes


@dataclass
class Model:
    config: ModelConfig
    params: dict = field(default_factory=dict)

    def param_arrays(self):
        return {name: p.data for name, p in self.params.items()}

    def grid_for(self, H, W):
        return grid_init(H, W, self.config.S)

    def forward(self, img):
        """Run the network on [H, W, 3] or [N, H, W, 3] input in [0, 1].

        Returns (Q, E, M): the association map [.., H, W, 9], the pixel
        embedding [.., H, W, D], and the cell embedding [.., h, w, C_top],
        batched iff the input was.
        """
        arr = np.asarray(img)
        single = arr.ndim == 3
        if single:
            arr = arr[None]
        if arr.ndim != 4 or arr.shape[3] != 3:
            raise ConfigError(f"expected [N, H, W, 3] input, got {arr.shape}")
        cfg = self.config
        h_img, w_img = arr.shape[1], arr.shape[2]
        grid = self.grid_for(h_img, w_img)
        p = self.params

        x = Tensor(np.ascontiguousarray(arr.transpose(0, 3, 1, 2), dtype=cfg.dtype))
        skips = []
        for i in range(1, cfg.levels + 1):
            x = ad.leaky_relu(ad.conv2d(x, p[f"enc{i}_conv1_w"], p[f"enc{i}_conv1_b"]), SLOPE)
            x = ad.leaky_relu(ad.conv2d(x, p[f"enc{i}_conv2_w"], p[f"enc{i}_conv2_b"]), SLOPE)
            skips.append(x)
            x = ad.max_pool2(x)
        m_cells = x  # [N, C_top, h, w]

        n = cfg.levels
        for j in range(n):
            x = ad.conv_transpose2d(x, p[f"dec{j + 1}_deconv_w"])
            if j < n - 1:
                x = ad.concat([x, skips[n - 1 - j]], axis=1)
            x = ad.leaky_relu(ad.conv2d(x, p[f"dec{j + 1}_conv_w"], p[f"dec{j + 1}_conv_b"]), SLOPE)
        e_pix = x  # [N, D, H, W]

        if cfg.use_ai:
            mhat = compress_channels_nchw(
                m_cells,
                p["comp_conv1_w"], p["comp_conv1_b"],
                p["comp_conv2_w"], p["comp_conv2_b"],
                SLOPE,
            )
            fused = []
            for i in range(arr.shape[0]):
                e_i = ad.permute(ad.take_item(e_pix, i), (1, 2, 0))
                m_i = ad.permute(ad.take_item(mhat, i), (1, 2, 0))
                windows = implant(e_i, m_i, grid, cfg.variant)
                fused.append(ai_fuse(windows, p["ai_w"], p["ai_b"]))
            x = ad.permute(ad.stack0(fused), (0, 3, 1, 2))
        else:
            x = ad.conv2d(e_pix, p["ai_w"], p["ai_b"])
        x = ad.leaky_relu(x, SLOPE)

        x = ad.leaky_relu(ad.conv2d(x, p["head_conv1_w"], p["head_conv1_b"]), SLOPE)
        logits = ad.conv2d(x, p["head_conv2_w"], p["head_conv2_b"])
        logits = _cap_logits(logits)
        q = ad.permute(ad.softmax_channels(logits, axis=1), (0, 2, 3, 1))
        e_hwc = ad.permute(e_pix, (0, 2, 3, 1))
        m_hwc = ad.permute(m_cells, (0, 2, 3, 1))
        if single:
            return ad.take_item(q, 0), ad.take_item(e_hwc, 0), ad.take_item(m_hwc, 0)
        return q, e_hwc, m_hwc


def build(config, rng=0):
    """Construct a model with seeded uniform(-a, a), a = 1/sqrt(fan_in) init."""
    gen = np.random.default_rng(rng)
    dtype = config.dtype
    params = {}
    for name, shape, fan_in in _conv_shapes(config):
        bound = float(np.sqrt(1.0 / fan_in))
        arr = gen.uniform(-bound, bound, size=shape).astype(dtype)
        params[name] = Tensor(arr, requires_grad=True)
    return Model(config=config, params=params)


def forward(model, img):
    return model.forward(img)
