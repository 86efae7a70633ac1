import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "embedseg",
    deadline=None,  # first calls hit JIT compilation
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("embedseg")


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # Compile the jitted kernels once so timing-sensitive tests never pay JIT.
    from embedseg import kernels

    x = np.random.default_rng(0).standard_normal((8, 8, 3)).astype(np.float32)
    w = np.random.default_rng(1).standard_normal((4, 3, 3, 3)).astype(np.float32)
    b = np.zeros(4, dtype=np.float32)
    y = kernels.conv2d_forward(x, w, b, 1)
    kernels.conv2d_forward(x, w, b, 2)
    kernels.conv2d_input_grad(y, w, 1, 8, 8)
    kernels.conv2d_param_grad(x, y, 1, 3)
    pts = np.random.default_rng(2).standard_normal((32, 4))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    kernels.meanshift_step(pts, pts[:4].copy(), 10.0)
    kernels.assign_nearest(pts, pts[:4].copy())


def unit_rows(rng: np.random.Generator, n: int, c: int) -> np.ndarray:
    x = rng.standard_normal((n, c))
    return x / np.linalg.norm(x, axis=1, keepdims=True)
