"""Von Mises-Fisher mean shift clustering of unit-length embeddings.

The pipeline is: farthest-point seeding, a fixed number of kernel-weighted
spherical updates, single-linkage merging of converged centers, nearest-
center assignment, and dissolution of clusters below a minimum size. All
stages are deterministic given the seed; assignment ties break to the lowest
center index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from embedseg import kernels
from embedseg.core import cosine_distance, spherical_mean


@dataclass(frozen=True)
class MeanShiftConfig:
    kappa: float = 20.0
    epsilon: float = 0.04          # merge threshold on cosine distance
    seeds: int = 100
    iterations: int = 10
    min_cluster_size: int = 32
    fixed_first_seed: bool = False  # True: start from the point farthest from the data mean
    merge_keep_first: bool = False  # True: keep the lowest-index member instead of the group mean

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")
        if self.seeds < 1 or self.iterations < 1:
            raise ValueError("seeds and iterations must be >= 1")


@dataclass(frozen=True)
class ClusterResult:
    centers: np.ndarray      # (K, C) unit rows
    assignment: np.ndarray   # (n,) cluster index per input row
    sizes: np.ndarray        # (K,) assigned row counts


def furthest_point_seeds(x: np.ndarray, m: int, seed: int = 0,
                         fixed_first: bool = False) -> np.ndarray:
    """Greedy farthest-point traversal of the rows of x under cosine distance.

    The first pick is a uniformly random row (seeded); with ``fixed_first``
    it is the row farthest from the dataset's spherical mean, which makes the
    traversal invariant to row permutations when the data has no ties.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    m = min(m, n)
    if fixed_first:
        first = int(np.argmax(cosine_distance(x, spherical_mean(x))))
    else:
        first = int(np.random.default_rng(seed).integers(n))
    chosen = [first]
    min_dist = cosine_distance(x, x[first])
    for _ in range(m - 1):
        nxt = int(np.argmax(min_dist))
        chosen.append(nxt)
        np.minimum(min_dist, cosine_distance(x, x[nxt]), out=min_dist)
    return x[np.array(chosen)]


def meanshift_iterate(x: np.ndarray, seeds: np.ndarray, cfg: MeanShiftConfig) -> np.ndarray:
    """Run exactly cfg.iterations kernel-weighted updates of the seed rows."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    mu = np.ascontiguousarray(seeds, dtype=np.float64)
    for _ in range(cfg.iterations):
        mu = kernels.meanshift_step(x, mu, cfg.kappa)
    return mu


def merge_centers(centers: np.ndarray, epsilon: float, keep_first: bool = False) -> np.ndarray:
    """Single-linkage grouping of centers closer than epsilon.

    Groups are replaced by their spherical mean (or their lowest-index member
    with ``keep_first``) and the pass repeats until all survivors are at
    least epsilon apart, since replacing a group by its mean can create new
    close pairs.
    """
    centers = np.asarray(centers, dtype=np.float64)
    while True:
        k = centers.shape[0]
        if k <= 1:
            return centers
        parent = list(range(k))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        dist = cosine_distance(centers[:, None, :], centers[None, :, :])
        for a in range(k):
            for b in range(a + 1, k):
                if dist[a, b] < epsilon:
                    ra, rb = find(a), find(b)
                    if ra != rb:
                        parent[max(ra, rb)] = min(ra, rb)
        groups: dict[int, list[int]] = {}
        for a in range(k):
            groups.setdefault(find(a), []).append(a)
        if len(groups) == k:
            return centers
        merged = []
        for root in sorted(groups):
            members = groups[root]
            if keep_first:
                merged.append(centers[members[0]])
            else:
                merged.append(spherical_mean(centers[members]))
        centers = np.stack(merged)
        if keep_first:
            return centers  # representatives are original members, already >= eps apart


def cluster(x: np.ndarray, cfg: MeanShiftConfig, seed: int = 0) -> ClusterResult:
    """Cluster unit rows: seed, iterate, merge, assign, dissolve small clusters."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot cluster an empty matrix")
    seeds = furthest_point_seeds(x, cfg.seeds, seed, cfg.fixed_first_seed)
    centers = meanshift_iterate(x, seeds, cfg)
    centers = merge_centers(centers, cfg.epsilon, cfg.merge_keep_first)
    assignment = kernels.assign_nearest(x, np.ascontiguousarray(centers))
    sizes = np.bincount(assignment, minlength=centers.shape[0])

    keep = sizes >= cfg.min_cluster_size
    if not keep.any():
        keep[int(np.argmax(sizes))] = True
    if not keep.all():
        centers = np.ascontiguousarray(centers[keep])
        assignment = kernels.assign_nearest(x, centers)
        sizes = np.bincount(assignment, minlength=centers.shape[0])
    return ClusterResult(centers=centers, assignment=assignment, sizes=sizes)


def segment_image(grid: np.ndarray, cfg: MeanShiftConfig, seed: int = 0) -> np.ndarray:
    """Cluster an (H, W, C) embedding grid into an int32 label mask.

    The cluster owning the most image-border pixels becomes background label
    0 (count ties break to the lowest cluster index); the remaining clusters
    are numbered 1.. in center order.
    """
    grid = np.asarray(grid)
    h, w, c = grid.shape
    result = cluster(grid.reshape(-1, c), cfg, seed)
    amap = result.assignment.reshape(h, w)

    border = np.zeros((h, w), dtype=bool)
    border[0, :] = border[-1, :] = True
    border[:, 0] = border[:, -1] = True
    border_counts = np.bincount(amap[border], minlength=result.centers.shape[0])
    bg = int(np.argmax(border_counts))

    lut = np.empty(result.centers.shape[0], dtype=np.int32)
    lut[bg] = 0
    nxt = 1
    for i in range(result.centers.shape[0]):
        if i != bg:
            lut[i] = nxt
            nxt += 1
    return lut[amap]
