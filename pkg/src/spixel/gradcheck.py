"""Central finite-difference gradient checks for every differentiable op.

The numeric side only ever calls forward evaluations, so it stays
independent of the backward implementations it verifies. All checks run in
float64 with inputs rejection-sampled away from non-smooth points (pooling
ties, rectifier kinks, similarity clamps).
"""

import numpy as np

from . import autodiff as ad
from .assoc import AssociationMap, aggregate_superpixel_property, reconstruct_pixel_property, task_loss
from .autodiff import Graph, Tensor
from .bploss import boundary_loss_from_patches, make_partition, patch_loss, sample_patches
from .data import gen_synthetic
from .errors import ConfigError
from .grid import grid_init
from .implant import ai_fuse, implant
from .model import ModelConfig, build

GRAD_TOL = 1e-4
FD_EPS = 1e-3


def finite_difference_gradient(fn, arrays, eps=FD_EPS):
    """d fn / d arr for every element, by central differences in place."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = fn()
            flat[i] = orig - eps
            fm = fn()
            flat[i] = orig
            gf[i] = (fp - fm) / (2.0 * eps)
        grads.append(g)
    return grads


def finite_difference_entries(fn, arr, entries, eps=FD_EPS):
    """Central differences for selected flat indices of one array."""
    flat = arr.reshape(-1)
    out = []
    for idx in entries:
        orig = flat[idx]
        flat[idx] = orig + eps
        fp = fn()
        flat[idx] = orig - eps
        fm = fn()
        flat[idx] = orig
        out.append((fp - fm) / (2.0 * eps))
    return np.asarray(out)


def max_rel_error(analytic, numeric, floor=1e-6):
    a = np.asarray(analytic, np.float64)
    n = np.asarray(numeric, np.float64)
    den = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float((np.abs(a - n) / den).max()) if a.size else 0.0


def _check(arrays, forward, eps=FD_EPS):
    """Analytic grads of forward(*tensors) vs finite differences."""
    tensors = [Tensor(arr, requires_grad=True) for arr in arrays]
    with Graph() as graph:
        loss = forward(*tensors)
    graph.backward(loss)
    analytic = [t.grad.copy() for t in tensors]

    def value():
        return float(forward(*[Tensor(arr) for arr in arrays]).data)

    numeric = finite_difference_gradient(value, arrays, eps)
    return max(max_rel_error(a, n) for a, n in zip(analytic, numeric))


def _projection(rng, shape):
    return Tensor(rng.standard_normal(shape))


def _softmax(logits, axis=-1):
    e = np.exp(logits - logits.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def check_conv2d(seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 2, 6, 6))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    r = _projection(rng, (1, 3, 6, 6))
    return _check(
        [x, w, b],
        lambda xt, wt, bt: ad.tsum(ad.mul(ad.conv2d(xt, wt, bt, 1, 1), r)),
    )


def check_conv_transpose2d(seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 2, 3, 3))
    w = rng.standard_normal((2, 3, 2, 2))
    r = _projection(rng, (1, 3, 6, 6))
    return _check(
        [x, w],
        lambda xt, wt: ad.tsum(ad.mul(ad.conv_transpose2d(xt, wt), r)),
    )


def check_max_pool2(seed=0):
    rng = np.random.default_rng(seed)
    while True:  # keep each 2x2 block's top-2 gap clear of the FD step
        x = rng.standard_normal((1, 2, 6, 6))
        blocks = x.reshape(1, 2, 3, 2, 3, 2).transpose(0, 1, 2, 4, 3, 5).reshape(-1, 4)
        top2 = np.sort(blocks, axis=1)[:, -2:]
        if (top2[:, 1] - top2[:, 0]).min() > 0.05:
            break
    r = _projection(rng, (1, 2, 3, 3))
    return _check([x], lambda xt: ad.tsum(ad.mul(ad.max_pool2(xt), r)))


def check_leaky_relu(seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((4, 5))
    x = np.where(np.abs(x) < 0.05, x + 0.2, x)  # step off the kink at 0
    r = _projection(rng, (4, 5))
    return _check([x], lambda xt: ad.tsum(ad.mul(ad.leaky_relu(xt, 0.1), r)))


def check_softmax_channels(seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 9, 4, 4))
    r = _projection(rng, (1, 9, 4, 4))
    return _check([x], lambda xt: ad.tsum(ad.mul(ad.softmax_channels(xt, 1), r)))


def check_aggregate(seed=0):
    rng = np.random.default_rng(seed)
    grid = grid_init(12, 12, 4)
    q = _softmax(rng.standard_normal((12, 12, 9)))
    l = rng.standard_normal((12, 12, 3))
    r = _projection(rng, (3, 3, 3))
    return _check(
        [q, l],
        lambda qt, lt: ad.tsum(ad.mul(aggregate_superpixel_property(qt, lt, grid), r)),
    )


def check_reconstruct(seed=0):
    rng = np.random.default_rng(seed)
    grid = grid_init(12, 12, 4)
    q = _softmax(rng.standard_normal((12, 12, 9)))
    hs = rng.standard_normal((3, 3, 3))
    r = _projection(rng, (12, 12, 3))
    return _check(
        [q, hs],
        lambda qt, ht: ad.tsum(ad.mul(reconstruct_pixel_property(qt, ht, grid), r)),
    )


def check_task_loss(seed=0):
    from .labels import LabelMap

    rng = np.random.default_rng(seed)
    grid = grid_init(8, 8, 4)
    q = _softmax(rng.standard_normal((8, 8, 9)))
    labels = LabelMap(rng.integers(0, 3, size=(8, 8)).astype(np.int32), 3)
    lam = 0.003 / 16
    return _check([q], lambda qt: task_loss(qt, labels, grid, lam))


def _check_implant(variant, seed=0):
    rng = np.random.default_rng(seed)
    grid = grid_init(8, 8, 4)
    e = rng.standard_normal((8, 8, 3))
    mhat = rng.standard_normal((2, 2, 3))
    w = rng.standard_normal((2, 3, 3, 3))
    b = rng.standard_normal(2)
    r = _projection(rng, (8, 8, 2))

    def fwd(et, mt, wt, bt):
        return ad.tsum(ad.mul(ai_fuse(implant(et, mt, grid, variant), wt, bt), r))

    return _check([e, mhat, w, b], fwd)


def check_implant_standard(seed=0):
    return _check_implant("standard", seed)


def check_implant_pnbor(seed=0):
    return _check_implant("pnbor", seed)


def check_implant_cpix(seed=0):
    return _check_implant("cpix", seed)


def _half_plane_labels(size, split):
    from .labels import LabelMap

    ids = np.zeros((size, size), np.int32)
    ids[:, split:] = 1
    return LabelMap(ids, 2)


def check_patch_loss(seed=0):
    rng = np.random.default_rng(seed)
    labels = _half_plane_labels(12, 6)
    patches = sample_patches(labels, 5, 4, np.random.default_rng(seed))
    partitions = [make_partition(p, np.random.default_rng(seed + 1 + i)) for i, p in enumerate(patches)]
    while True:  # group means must sit clear of the L1 kinks and sim clamps
        e = rng.standard_normal((12, 12, 4))
        ok = True
        for patch, part in zip(patches, partitions):
            means = [
                e[c[:, 0], c[:, 1]].mean(axis=0)
                for c in (part.f1, part.f2, part.g1, part.g2)
            ]
            for i in range(4):
                for j in range(i + 1, 4):
                    if np.abs(means[i] - means[j]).min() < 0.02:
                        ok = False
        if ok:
            break
    return _check(
        [e],
        lambda et: boundary_loss_from_patches(et, patches, partitions),
    )


def check_model_full(seed=0, n_params=20):
    """Composite training loss vs finite differences on sampled parameters."""
    cfg = ModelConfig(S=8, widths=(4, 6, 8), D=4, compress_mid=4, K=5, precision="f64")
    model = build(cfg, rng=seed)
    sample = gen_synthetic(1, 16, 3, rng=seed)[0]
    grid = grid_init(16, 16, 8)
    labels = sample.labels
    patches = sample_patches(labels, 5, 6, np.random.default_rng(seed))
    partitions = [make_partition(p, np.random.default_rng(seed + 7 + i)) for i, p in enumerate(patches)]
    lam, alpha = 0.003 / 16, 0.5

    def loss_tensor():
        q, e, _ = model.forward(sample.image)
        full = task_loss(AssociationMap(q), labels, grid, lam)
        bpl = boundary_loss_from_patches(e, patches, partitions)
        return ad.add(full, ad.mul(bpl, alpha))

    with Graph() as graph:
        loss = loss_tensor()
    graph.backward(loss, params=model.params.values())

    # rejection: FD noise at eps=1e-3 swamps near-zero gradients
    candidates = []
    for name, p in model.params.items():
        flat = p.grad.reshape(-1)
        for idx in np.nonzero(np.abs(flat) >= 1e-3)[0]:
            candidates.append((name, int(idx), abs(float(flat[idx]))))
    if len(candidates) < n_params:
        candidates = sorted(
            ((name, int(i), abs(float(g)))
             for name, p in model.params.items()
             for i, g in enumerate(p.grad.reshape(-1))),
            key=lambda t: -t[2],
        )[: n_params * 3]
    rng = np.random.default_rng(seed + 99)
    picks = [candidates[i] for i in rng.choice(len(candidates), size=min(n_params, len(candidates)), replace=False)]

    def value():
        return float(loss_tensor().data)

    worst = 0.0
    for name, idx, _ in picks:
        analytic = model.params[name].grad.reshape(-1)[idx]
        numeric = finite_difference_entries(value, model.params[name].data, [idx])[0]
        worst = max(worst, max_rel_error([analytic], [numeric]))
    return worst


SUITE = {
    "conv2d": check_conv2d,
    "conv_transpose2d": check_conv_transpose2d,
    "max_pool2": check_max_pool2,
    "leaky_relu": check_leaky_relu,
    "softmax_channels": check_softmax_channels,
    "aggregate": check_aggregate,
    "reconstruct": check_reconstruct,
    "task_loss": check_task_loss,
    "implant_standard": check_implant_standard,
    "implant_pnbor": check_implant_pnbor,
    "implant_cpix": check_implant_cpix,
    "patch_loss": check_patch_loss,
    "model_full": check_model_full,
}


def run_suite(scope="all", seed=0):
    """Max relative gradient error per op; ``scope`` is 'all' or one op name."""
    if scope == "all":
        names = list(SUITE)
    elif scope in SUITE:
        names = [scope]
    else:
        raise ConfigError(f"unknown gradcheck scope {scope!r}; options: all, {', '.join(SUITE)}")
    return {name: SUITE[name](seed=seed) for name in names}
