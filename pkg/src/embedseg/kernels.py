"""Dispatch layer over the numba and numpy kernel implementations."""

from __future__ import annotations

import importlib

import numpy as np

from embedseg import backend

_modules: dict[str, object] = {}


def _impl():
    name = backend.get_backend()
    mod = _modules.get(name)
    if mod is None:
        mod = importlib.import_module(f"embedseg._kernels_{name}")
        _modules[name] = mod
    return mod


def conv2d_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1
) -> np.ndarray:
    """Same-padded correlation of x (H, W, Ci) with w (Co, Ci, k, k)."""
    return _impl().conv2d_forward(x, w, b, stride)


def conv2d_input_grad(
    gy: np.ndarray, w: np.ndarray, stride: int, h: int, wd: int
) -> np.ndarray:
    return _impl().conv2d_input_grad(gy, w, stride, h, wd)


def conv2d_param_grad(
    x: np.ndarray, gy: np.ndarray, stride: int, k: int
) -> tuple[np.ndarray, np.ndarray]:
    return _impl().conv2d_param_grad(x, gy, stride, k)


def meanshift_step(x: np.ndarray, mu: np.ndarray, kappa: float) -> np.ndarray:
    return _impl().meanshift_step(x, mu, kappa)


def assign_nearest(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return _impl().assign_nearest(x, centers)
