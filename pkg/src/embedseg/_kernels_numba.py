"""Numba kernel implementations.

Convolutions run serially inside one jit function (im2col gather plus a BLAS
np.dot); interleaving prange regions with BLAS calls makes the two thread
pools fight for cores, so only the clustering kernels, which contain no BLAS
calls, use prange. Parallel loops iterate over independent output elements
and accumulate each one sequentially inside a single thread, so results are
bitwise stable across reruns and across worker counts.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True)
def _pad_same(x, pad):
    if pad == 0:
        return x
    h, w, c = x.shape
    out = np.zeros((h + 2 * pad, w + 2 * pad, c), dtype=x.dtype)
    out[pad : pad + h, pad : pad + w, :] = x
    return out


@njit(cache=True)
def _im2col(xp, k, stride, ho, wo):
    ci = xp.shape[2]
    cols = np.empty((ho * wo, k * k * ci), dtype=xp.dtype)
    for r in range(ho):
        for c in range(wo):
            idx = r * wo + c
            col = 0
            for ky in range(k):
                for kx in range(k):
                    for i in range(ci):
                        cols[idx, col] = xp[r * stride + ky, c * stride + kx, i]
                        col += 1
    return cols


@njit(cache=True)
def _weight_matrix(w):
    # (Co, Ci, k, k) -> (k*k*Ci, Co), minor order (ky, kx, ci)
    co, ci, k, _ = w.shape
    wmat = np.empty((k * k * ci, co), dtype=w.dtype)
    for o in range(co):
        row = 0
        for ky in range(k):
            for kx in range(k):
                for i in range(ci):
                    wmat[row, o] = w[o, i, ky, kx]
                    row += 1
    return wmat


@njit(cache=True)
def _conv2d_forward(x, w, b, stride):
    co, ci, k, _ = w.shape
    h, wd = x.shape[0], x.shape[1]
    pad = k // 2
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    cols = _im2col(_pad_same(x, pad), k, stride, ho, wo)
    y = np.dot(cols, _weight_matrix(w))
    for idx in range(ho * wo):
        for o in range(co):
            y[idx, o] += b[o]
    return y.reshape(ho, wo, co)


@njit(cache=True)
def _conv2d_input_grad(gy, w, stride, h, wd):
    co, ci, k, _ = w.shape
    if stride == 1:
        gz = gy
    else:
        gz = np.zeros((h, wd, co), dtype=gy.dtype)
        for r in range(gy.shape[0]):
            for c in range(gy.shape[1]):
                for o in range(co):
                    gz[r * stride, c * stride, o] = gy[r, c, o]
    wf = np.empty((ci, co, k, k), dtype=w.dtype)
    for o in range(co):
        for i in range(ci):
            for ky in range(k):
                for kx in range(k):
                    wf[i, o, ky, kx] = w[o, i, k - 1 - ky, k - 1 - kx]
    zb = np.zeros(ci, dtype=gy.dtype)
    return _conv2d_forward(gz, wf, zb, 1)


@njit(cache=True)
def _conv2d_param_grad(x, gy, stride, k):
    ho, wo, co = gy.shape
    ci = x.shape[2]
    cols = _im2col(_pad_same(x, k // 2), k, stride, ho, wo)
    g2 = np.ascontiguousarray(gy.reshape(ho * wo, co).T)
    gwmat = np.dot(g2, cols)  # (Co, k*k*Ci)
    gw = np.empty((co, ci, k, k), dtype=gy.dtype)
    for o in range(co):
        col = 0
        for ky in range(k):
            for kx in range(k):
                for i in range(ci):
                    gw[o, i, ky, kx] = gwmat[o, col]
                    col += 1
    gb = np.zeros(co, dtype=gy.dtype)
    for idx in range(ho * wo):
        for o in range(co):
            gb[o] += g2[o, idx]
    return gw, gb


@njit(cache=True, parallel=True)
def _meanshift_step(x, mu, kappa):
    n, c = x.shape
    m = mu.shape[0]
    out = np.empty_like(mu)
    for i in prange(m):
        mx = -1.0e300
        for j in range(n):
            d = 0.0
            for cc in range(c):
                d += mu[i, cc] * x[j, cc]
            if kappa * d > mx:
                mx = kappa * d
        acc = np.zeros(c, dtype=np.float64)
        for j in range(n):
            d = 0.0
            for cc in range(c):
                d += mu[i, cc] * x[j, cc]
            wgt = np.exp(kappa * d - mx)
            for cc in range(c):
                acc[cc] += wgt * x[j, cc]
        nrm = 0.0
        for cc in range(c):
            nrm += acc[cc] * acc[cc]
        nrm = np.sqrt(nrm)
        if nrm > 1e-12:
            for cc in range(c):
                out[i, cc] = acc[cc] / nrm
        else:
            for cc in range(c):
                out[i, cc] = 0.0
            out[i, 0] = 1.0
    return out


@njit(cache=True, parallel=True)
def _assign_nearest(x, centers):
    n, c = x.shape
    m = centers.shape[0]
    out = np.empty(n, dtype=np.int64)
    for j in prange(n):
        best = -1.0e300
        arg = 0
        for i in range(m):
            d = 0.0
            for cc in range(c):
                d += x[j, cc] * centers[i, cc]
            if d > best:
                best = d
                arg = i
        out[j] = arg
    return out


def conv2d_forward(x, w, b, stride):
    return _conv2d_forward(x, w, b, stride)


def conv2d_input_grad(gy, w, stride, h, wd):
    return _conv2d_input_grad(gy, w, stride, h, wd)


def conv2d_param_grad(x, gy, stride, k):
    return _conv2d_param_grad(x, gy, stride, k)


def meanshift_step(x, mu, kappa):
    return _meanshift_step(x, mu, float(kappa))


def assign_nearest(x, centers):
    return _assign_nearest(x, centers)
