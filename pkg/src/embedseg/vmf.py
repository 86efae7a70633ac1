"""Sampling from von Mises-Fisher distributions and labeled vMF mixtures.

The density on the unit sphere is proportional to exp(kappa * x . mu). The
sampler draws the cosine against the mean direction with the classic
rejection scheme (Ulrich 1984 / Wood 1994), pairs it with a uniform tangent
direction in the canonical frame whose pole is e_C, and Householder-reflects
the result onto the requested center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class VmfMixtureSpec:
    """A mixture of equally weighted vMF components with separated centers."""

    dim: int = 16
    components: int = 3
    kappa: float = 50.0
    samples_per_component: int = 200
    min_center_distance: float = 0.4  # pairwise cosine distance
    seed: int = 0

    def __post_init__(self):
        if self.components < 1:
            raise ValueError("components must be >= 1")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")


def _sample_cosines(kappa: float, dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    # Rejection sampling of w = x . mu for the vMF marginal on S^{dim-1}.
    d = dim - 1
    b = d / (np.sqrt(4.0 * kappa**2 + d**2) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + d * np.log(1.0 - x0**2)
    out = np.empty(n)
    remaining = np.arange(n)
    while remaining.size:
        z = rng.beta(d / 2.0, d / 2.0, size=remaining.size)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform(size=remaining.size)
        ok = kappa * w + d * np.log(1.0 - x0 * w) - c >= np.log(u)
        out[remaining[ok]] = w[ok]
        remaining = remaining[~ok]
    return out


def sample_vmf(
    center: np.ndarray, kappa: float, n: int, seed: int | np.random.Generator = 0
) -> np.ndarray:
    """Draw n unit vectors around ``center`` with concentration ``kappa``."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    mu = np.asarray(center, dtype=np.float64)
    mu = mu / np.linalg.norm(mu)
    dim = mu.shape[0]
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    w = _sample_cosines(float(kappa), dim, n, rng)
    tang = rng.standard_normal((n, dim - 1))
    tang /= np.linalg.norm(tang, axis=1, keepdims=True)

    # Canonical frame: pole e_C carries w, the tangent hyperplane carries the rest.
    canon = np.concatenate([tang * np.sqrt(1.0 - w**2)[:, None], w[:, None]], axis=1)

    # Householder reflection mapping e_C onto mu.
    pole = np.zeros(dim)
    pole[-1] = 1.0
    v = pole - mu
    vn = np.linalg.norm(v)
    if vn < 1e-12:
        samples = canon
    else:
        v /= vn
        samples = canon - 2.0 * np.outer(canon @ v, v)
    return samples / np.linalg.norm(samples, axis=1, keepdims=True)


def separated_centers(
    dim: int, k: int, min_distance: float, rng: np.random.Generator, max_tries: int = 2000
) -> np.ndarray:
    """Sample k unit vectors with pairwise cosine distance >= min_distance."""
    centers: list[np.ndarray] = []
    for _ in range(max_tries):
        cand = rng.standard_normal(dim)
        cand /= np.linalg.norm(cand)
        if all(0.5 * (1.0 - cand @ c) >= min_distance for c in centers):
            centers.append(cand)
            if len(centers) == k:
                return np.stack(centers)
    raise ValueError(
        f"could not place {k} centers at pairwise cosine distance "
        f">= {min_distance} in {max_tries} tries"
    )


def labeled_mixture(spec: VmfMixtureSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample a labeled vMF mixture.

    Returns (X, labels, centers): X is (n, C) with unit rows in shuffled
    order, labels are the generating component per row, centers the
    (K, C) generating directions.
    """
    rng = np.random.default_rng(spec.seed)
    centers = separated_centers(spec.dim, spec.components, spec.min_center_distance, rng)
    xs = []
    labels = []
    for k in range(spec.components):
        xs.append(sample_vmf(centers[k], spec.kappa, spec.samples_per_component, rng))
        labels.append(np.full(spec.samples_per_component, k, dtype=np.int64))
    x = np.concatenate(xs, axis=0)
    y = np.concatenate(labels)
    perm = rng.permutation(x.shape[0])
    return x[perm], y[perm], centers
