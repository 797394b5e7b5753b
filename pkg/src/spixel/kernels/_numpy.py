"""Pure-numpy kernel implementations.

Convolutions go through an im2col + BLAS matmul; the gather/scatter kernels
(cell aggregation, reconstruction, implant-fuse) use fancy indexing and
per-channel bincounts. Accumulations that numpy forces into float64 are cast
back to the input dtype on return so both backends expose the same dtypes.
"""

import numpy as np

# implant variants: 0 = standard, 1 = pixel-neighbor, 2 = center-pixel-only
VARIANT_STANDARD = 0
VARIANT_PNBOR = 1
VARIANT_CPIX = 2

_CENTER_TAP = 4  # row-major index of (1, 1) in the 3x3 window


def _im2col(xp, k, stride, ho, wo):
    n, c = xp.shape[0], xp.shape[1]
    s0, s1, s2, s3 = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, (n, ho, wo, c, k, k), (s0, s2 * stride, s3 * stride, s1, s2, s3)
    )
    # reshape of a strided view always copies here
    return view.reshape(n * ho * wo, c * k * k)


def _pad2d(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d_fwd(x, w, b, stride, pad):
    n, _, h, wd = x.shape
    f, _, k, _ = w.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    patches = _im2col(_pad2d(x, pad), k, stride, ho, wo)
    y = patches @ w.reshape(f, -1).T
    y += b
    return np.ascontiguousarray(y.reshape(n, ho, wo, f).transpose(0, 3, 1, 2))


def conv2d_bwd(dy, x, w, stride, pad, need_dx, need_dw):
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    ho, wo = dy.shape[2], dy.shape[3]
    dy2 = np.ascontiguousarray(dy.transpose(0, 2, 3, 1)).reshape(-1, f)
    db = dy2.sum(axis=0)
    dw = np.zeros_like(w)
    dx = np.zeros_like(x)
    if need_dw:
        patches = _im2col(_pad2d(x, pad), k, stride, ho, wo)
        dw = (dy2.T @ patches).reshape(f, c, k, k)
    if need_dx:
        dpat = (dy2 @ w.reshape(f, -1)).reshape(n, ho, wo, c, k, k)
        dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), x.dtype)
        span_h = (ho - 1) * stride + 1
        span_w = (wo - 1) * stride + 1
        for u in range(k):
            for v in range(k):
                dxp[:, :, u : u + span_h : stride, v : v + span_w : stride] += dpat[
                    :, :, :, :, u, v
                ].transpose(0, 3, 1, 2)
        dx = np.ascontiguousarray(dxp[:, :, pad : pad + h, pad : pad + wd])
    return dx, dw, db


def convt2x2_fwd(x, w):
    n, _, h, wd = x.shape
    f = w.shape[1]
    t = np.tensordot(x, w, axes=([1], [0]))  # [n, h, w, f, 2, 2]
    y = np.empty((n, f, 2 * h, 2 * wd), x.dtype)
    for u in range(2):
        for v in range(2):
            y[:, :, u::2, v::2] = t[:, :, :, :, u, v].transpose(0, 3, 1, 2)
    return y


def convt2x2_bwd(dy, x, w, need_dx, need_dw):
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    for u in range(2):
        for v in range(2):
            dyv = dy[:, :, u::2, v::2]
            if need_dx:
                dx += np.tensordot(dyv, w[:, :, u, v], axes=([1], [1])).transpose(
                    0, 3, 1, 2
                )
            if need_dw:
                dw[:, :, u, v] = np.tensordot(x, dyv, axes=([0, 2, 3], [0, 2, 3]))
    return dx, dw


def maxpool2_fwd(x):
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    blocks = np.ascontiguousarray(
        x.reshape(n, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5)
    ).reshape(n, c, ho, wo, 4)
    idx = blocks.argmax(axis=-1).astype(np.uint8)  # first max wins ties
    y = np.take_along_axis(blocks, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(y), idx


def maxpool2_bwd(dy, idx):
    n, c, ho, wo = dy.shape
    dblocks = np.zeros((n, c, ho, wo, 4), dy.dtype)
    np.put_along_axis(dblocks, idx[..., None].astype(np.intp), dy[..., None], axis=-1)
    return np.ascontiguousarray(
        dblocks.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    ).reshape(n, c, 2 * ho, 2 * wo)


def aggregate_fwd(q, l, nbr, ncell):
    c = l.shape[1]
    num = np.zeros((ncell, c), np.float64)
    den = np.zeros(ncell, np.float64)
    for k in range(9):
        idx = nbr[:, k]
        qk = q[:, k]
        den += np.bincount(idx, weights=qk, minlength=ncell)
        wk = qk[:, None] * l
        for ch in range(c):
            num[:, ch] += np.bincount(idx, weights=wk[:, ch], minlength=ncell)
    return num.astype(l.dtype, copy=False), den.astype(q.dtype, copy=False)


def aggregate_bwd(dnum, dden, q, l, nbr):
    dq = np.empty_like(q)
    dl = np.zeros_like(l)
    for k in range(9):
        idx = nbr[:, k]
        dn = dnum[idx]
        dq[:, k] = (l * dn).sum(axis=1) + dden[idx]
        dl += q[:, k][:, None] * dn
    return dq, dl


def reconstruct_fwd(q, hs, nbr):
    p = q.shape[0]
    c = hs.shape[1]
    out = np.zeros((p, c), hs.dtype)
    for k in range(9):
        out += q[:, k][:, None] * hs[nbr[:, k]]
    return out


def reconstruct_bwd(g, q, hs, nbr, ncell):
    c = hs.shape[1]
    dq = np.empty_like(q)
    dhs = np.zeros((ncell, c), np.float64)
    for k in range(9):
        idx = nbr[:, k]
        dq[:, k] = (g * hs[idx]).sum(axis=1)
        contrib = q[:, k][:, None] * g
        for ch in range(c):
            dhs[:, ch] += np.bincount(idx, weights=contrib[:, ch], minlength=ncell)
    return dq, dhs.astype(hs.dtype, copy=False)


def _tap_input(e, mhat, nbr, pnbr, variant, k):
    if variant == VARIANT_PNBOR:
        return mhat[nbr[:, k]] + e[pnbr[:, k]]
    if k != _CENTER_TAP:
        return mhat[nbr[:, k]]
    if variant == VARIANT_CPIX:
        return e
    return mhat[nbr[:, k]] + e


def implant_fuse_fwd(e, mhat, w, b, nbr, pnbr, variant):
    p = e.shape[0]
    dout = w.shape[0]
    out = np.empty((p, dout), e.dtype)
    out[:] = b
    for k in range(9):
        u, v = divmod(k, 3)
        tap = _tap_input(e, mhat, nbr, pnbr, variant, k)
        out += tap @ np.ascontiguousarray(w[:, :, u, v].T)
    return out


def implant_fuse_bwd(dy, e, mhat, w, nbr, pnbr, variant):
    p, d = e.shape
    m = mhat.shape[0]
    de = np.zeros((p, d), np.float64)
    dmhat = np.zeros((m, d), np.float64)
    dw = np.zeros_like(w)
    db = dy.sum(axis=0)
    for k in range(9):
        u, v = divmod(k, 3)
        dtap = dy @ w[:, :, u, v]
        tap = _tap_input(e, mhat, nbr, pnbr, variant, k)
        dw[:, :, u, v] = dy.T @ tap
        if not (variant == VARIANT_CPIX and k == _CENTER_TAP):
            idx = nbr[:, k]
            for ch in range(d):
                dmhat[:, ch] += np.bincount(idx, weights=dtap[:, ch], minlength=m)
        if variant == VARIANT_PNBOR:
            pidx = pnbr[:, k]
            for ch in range(d):
                de[:, ch] += np.bincount(pidx, weights=dtap[:, ch], minlength=p)
        elif k == _CENTER_TAP:
            de += dtap
    return de.astype(e.dtype, copy=False), dmhat.astype(mhat.dtype, copy=False), dw, db
