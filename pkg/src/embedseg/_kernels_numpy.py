"""Pure-numpy kernel implementations.

Convolutions run as im2col + BLAS matmul; column order is (ky, kx, cin) so
both backends share one weight-matrix layout. Reductions defined per output
element keep results independent of BLAS thread count in practice and make
reruns bit-stable.
"""

from __future__ import annotations

import numpy as np


def _pad_same(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((pad, pad), (pad, pad), (0, 0)))


def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    # xp: padded (Hp, Wp, Ci) -> (ho*wo, k*k*Ci), minor order (ky, kx, ci)
    s0, s1, s2 = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp,
        shape=(ho, wo, k, k, xp.shape[2]),
        strides=(s0 * stride, s1 * stride, s0, s1, s2),
        writeable=False,
    )
    return win.reshape(ho * wo, k * k * xp.shape[2])


def conv2d_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int
) -> np.ndarray:
    """Correlate x (H, W, Ci) with w (Co, Ci, k, k), 'same' padding k//2."""
    co, ci, k, _ = w.shape
    h, wd, _ = x.shape
    pad = k // 2
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    cols = _im2col(_pad_same(x, pad), k, stride, ho, wo)
    wmat = w.transpose(2, 3, 1, 0).reshape(k * k * ci, co)
    y = cols @ wmat + b
    return y.reshape(ho, wo, co)


def conv2d_input_grad(
    gy: np.ndarray, w: np.ndarray, stride: int, h: int, wd: int
) -> np.ndarray:
    """Gradient of conv2d_forward w.r.t. x, via zero-stuffing + flipped kernel."""
    co, ci, k, _ = w.shape
    if stride == 1:
        gz = gy
    else:
        gz = np.zeros((h, wd, co), dtype=gy.dtype)
        gz[::stride, ::stride] = gy
    wf = np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    return conv2d_forward(gz, wf, np.zeros(ci, dtype=gy.dtype), 1)


def conv2d_param_grad(
    x: np.ndarray, gy: np.ndarray, stride: int, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of conv2d_forward w.r.t. (w, b)."""
    ho, wo, co = gy.shape
    ci = x.shape[2]
    cols = _im2col(_pad_same(x, k // 2), k, stride, ho, wo)
    g2 = gy.reshape(ho * wo, co)
    gw = (g2.T @ cols).reshape(co, k, k, ci).transpose(0, 3, 1, 2)
    gb = g2.sum(axis=0)
    return np.ascontiguousarray(gw), gb


def meanshift_step(x: np.ndarray, mu: np.ndarray, kappa: float) -> np.ndarray:
    """One von Mises-Fisher mean shift update of the seed rows.

    Weights exp(kappa * mu_i . x_j) are rescaled by the per-seed max exponent
    before exponentiation; the subsequent row normalization cancels the
    rescaling exactly, so this only guards against overflow.
    """
    logits = kappa * (mu @ x.T)
    logits -= logits.max(axis=1, keepdims=True)
    wts = np.exp(logits)
    acc = wts @ x
    norms = np.linalg.norm(acc, axis=1, keepdims=True)
    out = np.where(norms > 1e-12, acc / np.maximum(norms, 1e-300), 0.0)
    degenerate = (norms <= 1e-12).ravel()
    if degenerate.any():
        out[degenerate, :] = 0.0
        out[degenerate, 0] = 1.0
    return out


def assign_nearest(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Index of the nearest center by cosine distance; ties to the lowest index."""
    dots = x @ centers.T
    return np.argmax(dots, axis=1).astype(np.int64)
