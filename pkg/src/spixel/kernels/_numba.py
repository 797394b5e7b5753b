"""Numba-jitted kernel implementations.

Same contracts as ``_numpy``; loops are written so the innermost stride is
contiguous. The conv kernels build the patch matrix with explicit loops and
hand the contraction to BLAS via ``np.dot``. All kernels are serial: scatter
accumulation order is fixed, so results are reproducible run to run.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def conv2d_fwd(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    f = w.shape[0]
    k = w.shape[2]
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), x.dtype)
    xp[:, :, pad : pad + h, pad : pad + wd] = x
    ckk = c * k * k
    patches = np.empty((n * ho * wo, ckk), x.dtype)
    row = 0
    for ni in range(n):
        for oy in range(ho):
            iy0 = oy * stride
            for ox in range(wo):
                ix0 = ox * stride
                col = 0
                for ci in range(c):
                    for u in range(k):
                        for v in range(k):
                            patches[row, col] = xp[ni, ci, iy0 + u, ix0 + v]
                            col += 1
                row += 1
    wmat_t = np.ascontiguousarray(w.reshape(f, ckk).T)
    y2 = np.dot(patches, wmat_t)
    y = np.empty((n, f, ho, wo), x.dtype)
    row = 0
    for ni in range(n):
        for oy in range(ho):
            for ox in range(wo):
                for fi in range(f):
                    y[ni, fi, oy, ox] = y2[row, fi] + b[fi]
                row += 1
    return y


@njit(cache=True)
def conv2d_bwd(dy, x, w, stride, pad, need_dx, need_dw):
    n, c, h, wd = x.shape
    f = w.shape[0]
    k = w.shape[2]
    ho = dy.shape[2]
    wo = dy.shape[3]
    p = n * ho * wo
    ckk = c * k * k
    dy2 = np.empty((p, f), dy.dtype)
    row = 0
    for ni in range(n):
        for oy in range(ho):
            for ox in range(wo):
                for fi in range(f):
                    dy2[row, fi] = dy[ni, fi, oy, ox]
                row += 1
    db = np.zeros(f, dy.dtype)
    for r in range(p):
        for fi in range(f):
            db[fi] += dy2[r, fi]
    dw = np.zeros_like(w)
    dx = np.zeros_like(x)
    if need_dw:
        xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), x.dtype)
        xp[:, :, pad : pad + h, pad : pad + wd] = x
        patches = np.empty((p, ckk), x.dtype)
        row = 0
        for ni in range(n):
            for oy in range(ho):
                iy0 = oy * stride
                for ox in range(wo):
                    ix0 = ox * stride
                    col = 0
                    for ci in range(c):
                        for u in range(k):
                            for v in range(k):
                                patches[row, col] = xp[ni, ci, iy0 + u, ix0 + v]
                                col += 1
                    row += 1
        dwmat = np.dot(np.ascontiguousarray(dy2.T), patches)
        dw = dwmat.reshape(f, c, k, k)
    if need_dx:
        dpat = np.dot(dy2, w.reshape(f, ckk))
        dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), x.dtype)
        row = 0
        for ni in range(n):
            for oy in range(ho):
                iy0 = oy * stride
                for ox in range(wo):
                    ix0 = ox * stride
                    col = 0
                    for ci in range(c):
                        for u in range(k):
                            for v in range(k):
                                dxp[ni, ci, iy0 + u, ix0 + v] += dpat[row, col]
                                col += 1
                    row += 1
        dx = np.ascontiguousarray(dxp[:, :, pad : pad + h, pad : pad + wd])
    return dx, dw, db


@njit(cache=True)
def convt2x2_fwd(x, w):
    n, c, h, wd = x.shape
    f = w.shape[1]
    y = np.zeros((n, f, 2 * h, 2 * wd), x.dtype)
    for ni in range(n):
        for i in range(h):
            for j in range(wd):
                for ci in range(c):
                    xv = x[ni, ci, i, j]
                    for fi in range(f):
                        y[ni, fi, 2 * i, 2 * j] += xv * w[ci, fi, 0, 0]
                        y[ni, fi, 2 * i, 2 * j + 1] += xv * w[ci, fi, 0, 1]
                        y[ni, fi, 2 * i + 1, 2 * j] += xv * w[ci, fi, 1, 0]
                        y[ni, fi, 2 * i + 1, 2 * j + 1] += xv * w[ci, fi, 1, 1]
    return y


@njit(cache=True)
def convt2x2_bwd(dy, x, w, need_dx, need_dw):
    n, c, h, wd = x.shape
    f = w.shape[1]
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    for ni in range(n):
        for i in range(h):
            for j in range(wd):
                for ci in range(c):
                    accx = 0.0
                    xv = x[ni, ci, i, j]
                    for fi in range(f):
                        for u in range(2):
                            for v in range(2):
                                g = dy[ni, fi, 2 * i + u, 2 * j + v]
                                accx += g * w[ci, fi, u, v]
                                if need_dw:
                                    dw[ci, fi, u, v] += xv * g
                    if need_dx:
                        dx[ni, ci, i, j] = accx
    return dx, dw


@njit(cache=True)
def maxpool2_fwd(x):
    n, c, h, w = x.shape
    ho = h // 2
    wo = w // 2
    y = np.empty((n, c, ho, wo), x.dtype)
    idx = np.empty((n, c, ho, wo), np.uint8)
    for ni in range(n):
        for ci in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    # strict > keeps the first (row-major) max on ties
                    best = x[ni, ci, 2 * oy, 2 * ox]
                    bi = 0
                    t = x[ni, ci, 2 * oy, 2 * ox + 1]
                    if t > best:
                        best = t
                        bi = 1
                    t = x[ni, ci, 2 * oy + 1, 2 * ox]
                    if t > best:
                        best = t
                        bi = 2
                    t = x[ni, ci, 2 * oy + 1, 2 * ox + 1]
                    if t > best:
                        best = t
                        bi = 3
                    y[ni, ci, oy, ox] = best
                    idx[ni, ci, oy, ox] = bi
    return y, idx


@njit(cache=True)
def maxpool2_bwd(dy, idx):
    n, c, ho, wo = dy.shape
    dx = np.zeros((n, c, 2 * ho, 2 * wo), dy.dtype)
    for ni in range(n):
        for ci in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    bi = idx[ni, ci, oy, ox]
                    dx[ni, ci, 2 * oy + bi // 2, 2 * ox + bi % 2] = dy[ni, ci, oy, ox]
    return dx


@njit(cache=True)
def aggregate_fwd(q, l, nbr, ncell):
    p, c = l.shape
    num = np.zeros((ncell, c), l.dtype)
    den = np.zeros(ncell, q.dtype)
    for pi in range(p):
        for k in range(9):
            s = nbr[pi, k]
            qv = q[pi, k]
            den[s] += qv
            for ch in range(c):
                num[s, ch] += qv * l[pi, ch]
    return num, den


@njit(cache=True)
def aggregate_bwd(dnum, dden, q, l, nbr):
    p, c = l.shape
    dq = np.empty_like(q)
    dl = np.zeros_like(l)
    for pi in range(p):
        for k in range(9):
            s = nbr[pi, k]
            acc = dden[s]
            qv = q[pi, k]
            for ch in range(c):
                acc += l[pi, ch] * dnum[s, ch]
                dl[pi, ch] += qv * dnum[s, ch]
            dq[pi, k] = acc
    return dq, dl


@njit(cache=True)
def reconstruct_fwd(q, hs, nbr):
    p = q.shape[0]
    c = hs.shape[1]
    out = np.zeros((p, c), hs.dtype)
    for pi in range(p):
        for k in range(9):
            s = nbr[pi, k]
            qv = q[pi, k]
            for ch in range(c):
                out[pi, ch] += qv * hs[s, ch]
    return out


@njit(cache=True)
def reconstruct_bwd(g, q, hs, nbr, ncell):
    p = q.shape[0]
    c = hs.shape[1]
    dq = np.empty_like(q)
    dhs = np.zeros((ncell, c), hs.dtype)
    for pi in range(p):
        for k in range(9):
            s = nbr[pi, k]
            acc = 0.0
            qv = q[pi, k]
            for ch in range(c):
                acc += g[pi, ch] * hs[s, ch]
                dhs[s, ch] += qv * g[pi, ch]
            dq[pi, k] = acc
    return dq, dhs


@njit(cache=True)
def _fill_tap(tap, e, mhat, nbr, pnbr, variant, pi, k):
    d = tap.shape[0]
    s = nbr[pi, k]
    if variant == 1:
        pj = pnbr[pi, k]
        for ch in range(d):
            tap[ch] = mhat[s, ch] + e[pj, ch]
    elif k == 4:
        if variant == 2:
            for ch in range(d):
                tap[ch] = e[pi, ch]
        else:
            for ch in range(d):
                tap[ch] = mhat[s, ch] + e[pi, ch]
    else:
        for ch in range(d):
            tap[ch] = mhat[s, ch]


@njit(cache=True)
def implant_fuse_fwd(e, mhat, w, b, nbr, pnbr, variant):
    p, d = e.shape
    dout = w.shape[0]
    # [9, d, dout] layout keeps the innermost (output-channel) stride unit
    wt = np.ascontiguousarray(w.transpose(2, 3, 1, 0)).reshape(9, d, dout)
    out = np.empty((p, dout), e.dtype)
    tap = np.empty(d, e.dtype)
    for pi in range(p):
        for o in range(dout):
            out[pi, o] = b[o]
        for k in range(9):
            _fill_tap(tap, e, mhat, nbr, pnbr, variant, pi, k)
            for ch in range(d):
                tv = tap[ch]
                for o in range(dout):
                    out[pi, o] += tv * wt[k, ch, o]
    return out


@njit(cache=True)
def implant_fuse_bwd(dy, e, mhat, w, nbr, pnbr, variant):
    p, d = e.shape
    m = mhat.shape[0]
    dout = w.shape[0]
    wt = np.ascontiguousarray(w.transpose(2, 3, 1, 0)).reshape(9, d, dout)
    de = np.zeros((p, d), e.dtype)
    dmhat = np.zeros((m, d), mhat.dtype)
    dwt = np.zeros((9, d, dout), w.dtype)
    db = np.zeros(dout, dy.dtype)
    tap = np.empty(d, e.dtype)
    dtap = np.empty(d, e.dtype)
    for pi in range(p):
        for o in range(dout):
            db[o] += dy[pi, o]
        for k in range(9):
            s = nbr[pi, k]
            _fill_tap(tap, e, mhat, nbr, pnbr, variant, pi, k)
            for ch in range(d):
                acc = 0.0
                for o in range(dout):
                    acc += wt[k, ch, o] * dy[pi, o]
                dtap[ch] = acc
                tv = tap[ch]
                for o in range(dout):
                    dwt[k, ch, o] += tv * dy[pi, o]
            if variant == 1:
                pj = pnbr[pi, k]
                for ch in range(d):
                    de[pj, ch] += dtap[ch]
                    dmhat[s, ch] += dtap[ch]
            elif k == 4:
                if variant == 2:
                    for ch in range(d):
                        de[pi, ch] += dtap[ch]
                else:
                    for ch in range(d):
                        de[pi, ch] += dtap[ch]
                        dmhat[s, ch] += dtap[ch]
            else:
                for ch in range(d):
                    dmhat[s, ch] += dtap[ch]
    dw = np.ascontiguousarray(dwt.reshape(3, 3, d, dout).transpose(3, 2, 0, 1))
    return de, dmhat, dw, db
