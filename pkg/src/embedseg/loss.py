"""Metric-learning loss on pixel embeddings and its analytical gradient.

Per labeled object (background counts as an object) up to N pixels are
sampled without replacement. Embeddings are unit-normalized; each object's
spherical mean mu_k = sum(x) / ||sum(x)|| acts as the cluster center. With
d(a, b) = (1 - a.b) / 2:

  intra  = mean over objects of  sum_{d_i >= alpha} d_i^2 / #{d_i >= alpha}
           (0 when no sample violates the margin)
  inter  = 2 / (K (K-1)) * sum_{k < k'} max(delta - d(mu_k, mu_k'), 0)^2
           (0 when K = 1)
  total  = w_intra * intra + w_inter * inter

The gradient is taken with respect to the raw, pre-normalization embeddings:
it chains through the per-pixel normalization and through every mean's
dependence on all of its object's samples. The margin indicator and the
violator count are held fixed (hinge subgradient). All arithmetic runs in
float64; only sampled pixels receive non-zero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from embedseg.core import spherical_mean


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.02           # intra-cluster margin
    delta: float = 0.5            # inter-cluster margin
    weight_intra: float = 1.0
    weight_inter: float = 1.0
    samples_per_object: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.alpha < self.delta <= 1.0):
            raise ValueError("need 0 <= alpha < delta <= 1")
        if self.samples_per_object < 1:
            raise ValueError("samples_per_object must be >= 1")


@dataclass(frozen=True)
class SampledBatch:
    """Sampled pixel indices per object, optionally with their unit vectors."""

    labels: np.ndarray              # (K,) ascending object ids, background included
    indices: tuple[np.ndarray, ...]  # flat pixel indices per object
    vectors: tuple[np.ndarray, ...] | None = None  # (N_k, C) unit vectors per object

    def with_vectors(self, unit_flat: np.ndarray) -> "SampledBatch":
        vecs = tuple(unit_flat[idx] for idx in self.indices)
        return replace(self, vectors=vecs)


@dataclass(frozen=True)
class LossValue:
    intra: float
    inter: float
    total: float
    means: np.ndarray  # (K, C) per-object spherical means


def sample_pixels(mask: np.ndarray, n: int, seed: int) -> SampledBatch:
    """Sample up to n pixel indices per label, uniformly without replacement.

    Labels are visited in ascending order so the draw is deterministic for a
    given (mask, seed).
    """
    mask = np.asarray(mask)
    rng = np.random.default_rng(seed)
    labels = np.unique(mask)
    flat = mask.ravel()
    picks = []
    for lab in labels:
        idx = np.flatnonzero(flat == lab)
        if idx.size > n:
            idx = np.sort(rng.choice(idx, size=n, replace=False))
        picks.append(idx)
    return SampledBatch(labels=labels, indices=tuple(picks))


def object_means(batch: SampledBatch) -> np.ndarray:
    if batch.vectors is None:
        raise ValueError("batch has no vectors attached")
    return np.stack([spherical_mean(v) for v in batch.vectors])


def intra_loss(batch: SampledBatch, cfg: LossConfig, means: np.ndarray | None = None) -> float:
    if batch.vectors is None:
        raise ValueError("batch has no vectors attached")
    if means is None:
        means = object_means(batch)
    terms = []
    for mu, x in zip(means, batch.vectors):
        d = 0.5 * (1.0 - x @ mu)
        viol = d >= cfg.alpha
        count = int(viol.sum())
        terms.append(float((d[viol] ** 2).sum() / count) if count else 0.0)
    return float(np.mean(terms))


def inter_loss(means: np.ndarray, cfg: LossConfig) -> float:
    k = means.shape[0]
    if k < 2:
        return 0.0
    total = 0.0
    for a in range(k):
        for b in range(a + 1, k):
            d = 0.5 * (1.0 - float(means[a] @ means[b]))
            hinge = cfg.delta - d
            if hinge > 0:
                total += hinge * hinge
    return 2.0 * total / (k * (k - 1))


def _normalize_rows(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    norms = np.linalg.norm(z, axis=1)
    dead = norms < 1e-12
    safe = np.where(dead, 1.0, norms)
    x = z / safe[:, None]
    if dead.any():
        x[dead] = 0.0
        x[dead, 0] = 1.0
    return x, norms, dead


def _evaluate(
    z_flat: np.ndarray, batch: SampledBatch, cfg: LossConfig, want_grad: bool
) -> tuple[LossValue, np.ndarray | None]:
    dim = z_flat.shape[1]
    k = len(batch.labels)

    sampled = np.concatenate(batch.indices)
    x_s, norms_s, dead_s = _normalize_rows(z_flat[sampled])
    splits = np.cumsum([idx.size for idx in batch.indices])[:-1]
    xs = np.split(x_s, splits)

    means = np.empty((k, dim))
    sum_norms = np.empty(k)
    degenerate = np.zeros(k, dtype=bool)
    for i, x in enumerate(xs):
        total = x.sum(axis=0)
        nrm = np.linalg.norm(total)
        sum_norms[i] = nrm
        if nrm < 1e-12:
            means[i] = 0.0
            means[i, 0] = 1.0
            degenerate[i] = True
        else:
            means[i] = total / nrm

    dists = [0.5 * (1.0 - x @ means[i]) for i, x in enumerate(xs)]
    viols = [d >= cfg.alpha for d in dists]
    counts = np.array([int(v.sum()) for v in viols])

    intra_terms = np.array(
        [
            float((d[v] ** 2).sum()) / c if c else 0.0
            for d, v, c in zip(dists, viols, counts)
        ]
    )
    intra = float(intra_terms.mean())

    pair_d = 0.5 * (1.0 - means @ means.T)
    hinges = np.maximum(cfg.delta - pair_d, 0.0)
    np.fill_diagonal(hinges, 0.0)
    if k >= 2:
        inter = float(np.triu(hinges**2, 1).sum() * 2.0 / (k * (k - 1)))
    else:
        inter = 0.0

    total = cfg.weight_intra * intra + cfg.weight_inter * inter
    value = LossValue(intra=intra, inter=inter, total=total, means=means)
    if not want_grad:
        return value, None

    gx_parts = []
    for i, x in enumerate(xs):
        gx = np.zeros_like(x)
        gmu = np.zeros(dim)
        if counts[i]:
            coef = cfg.weight_intra / (k * counts[i])
            dv = dists[i][viols[i]]
            gx[viols[i]] -= coef * dv[:, None] * means[i]
            gmu -= coef * (dv[:, None] * x[viols[i]]).sum(axis=0)
        if k >= 2:
            scale = cfg.weight_inter * 2.0 / (k * (k - 1))
            gmu += scale * (hinges[i][:, None] * means).sum(axis=0)
        if not degenerate[i]:
            g_sum = (gmu - means[i] * float(means[i] @ gmu)) / sum_norms[i]
            gx += g_sum
        gx_parts.append(gx)

    gx_s = np.concatenate(gx_parts)
    gz_s = (gx_s - x_s * np.einsum("nc,nc->n", x_s, gx_s)[:, None]) / np.where(
        dead_s, 1.0, norms_s
    )[:, None]
    gz_s[dead_s] = 0.0

    grad = np.zeros_like(z_flat)
    grad[sampled] = gz_s
    return value, grad


def total_loss(raw: np.ndarray, batch: SampledBatch, cfg: LossConfig) -> LossValue:
    """Loss of a raw (H, W, C) or (n, C) embedding array under a fixed batch."""
    z = np.asarray(raw, dtype=np.float64)
    z_flat = z.reshape(-1, z.shape[-1])
    value, _ = _evaluate(z_flat, batch, cfg, want_grad=False)
    return value


def total_loss_and_grad(
    raw: np.ndarray, mask: np.ndarray, cfg: LossConfig
) -> tuple[LossValue, np.ndarray]:
    """Sample pixels from the mask, evaluate the loss, return its gradient.

    The gradient has the shape of ``raw`` and is float64.
    """
    raw = np.asarray(raw)
    mask = np.asarray(mask)
    if raw.shape[:2] != mask.shape:
        raise ValueError(f"embeddings {raw.shape} and mask {mask.shape} must share H, W")
    batch = sample_pixels(mask, cfg.samples_per_object, cfg.seed)
    z = raw.astype(np.float64).reshape(-1, raw.shape[-1])
    value, grad = _evaluate(z, batch, cfg, want_grad=True)
    return value, grad.reshape(raw.shape)
